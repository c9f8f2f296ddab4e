#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rkdsc/eval.hpp"
#include "rkdsc/kdl_darts.hpp"
#include "rkdsc/nn.hpp"
#include "rkdsc/util.hpp"

namespace rkdsc {

// ---- checkpoints (parameters + provenance), write-temp-then-rename ----

inline void save_checkpoint(const std::string& path, const ParamStore& store,
                            const std::string& config_digest, std::uint64_t seed) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + tmp);
    const char magic[8] = {'R', 'K', 'D', 'S', 'C', '0', '1', '\n'};
    out.write(magic, 8);
    std::uint64_t dlen = config_digest.size();
    out.write(reinterpret_cast<const char*>(&dlen), 8);
    out.write(config_digest.data(), static_cast<std::streamsize>(dlen));
    out.write(reinterpret_cast<const char*>(&seed), 8);
    std::uint64_t n = static_cast<std::uint64_t>(store.count());
    out.write(reinterpret_cast<const char*>(&n), 8);
    for (int i = 0; i < store.count(); ++i) {
      const Param& p = store.at(i);
      std::uint64_t nlen = p.name.size();
      out.write(reinterpret_cast<const char*>(&nlen), 8);
      out.write(p.name.data(), static_cast<std::streamsize>(nlen));
      std::uint64_t rows = static_cast<std::uint64_t>(p.value.rows());
      std::uint64_t cols = static_cast<std::uint64_t>(p.value.cols());
      out.write(reinterpret_cast<const char*>(&rows), 8);
      out.write(reinterpret_cast<const char*>(&cols), 8);
      out.write(reinterpret_cast<const char*>(p.value.data()),
                static_cast<std::streamsize>(sizeof(double) * p.value.size()));
    }
  }
  std::filesystem::rename(tmp, path);
}

struct CheckpointInfo {
  std::string config_digest;
  std::uint64_t seed = 0;
};

// Loads values into an already-constructed store; names and shapes must match.
inline CheckpointInfo load_checkpoint(const std::string& path, ParamStore& store) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint missing: " + path);
  char magic[8];
  in.read(magic, 8);
  if (std::string(magic, 8) != "RKDSC01\n")
    throw std::runtime_error("bad checkpoint magic: " + path);
  CheckpointInfo info;
  std::uint64_t dlen = 0;
  in.read(reinterpret_cast<char*>(&dlen), 8);
  info.config_digest.resize(dlen);
  in.read(info.config_digest.data(), static_cast<std::streamsize>(dlen));
  in.read(reinterpret_cast<char*>(&info.seed), 8);
  std::uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), 8);
  if (n != static_cast<std::uint64_t>(store.count()))
    throw std::runtime_error("checkpoint parameter count mismatch: " + path);
  for (std::uint64_t i = 0; i < n; ++i) {
    std::uint64_t nlen = 0;
    in.read(reinterpret_cast<char*>(&nlen), 8);
    std::string name(nlen, '\0');
    in.read(name.data(), static_cast<std::streamsize>(nlen));
    std::uint64_t rows = 0, cols = 0;
    in.read(reinterpret_cast<char*>(&rows), 8);
    in.read(reinterpret_cast<char*>(&cols), 8);
    Param& p = store.at(static_cast<int>(i));
    if (p.name != name || p.value.rows() != static_cast<Eigen::Index>(rows) ||
        p.value.cols() != static_cast<Eigen::Index>(cols))
      throw std::runtime_error("checkpoint layout mismatch at '" + name + "': " + path);
    in.read(reinterpret_cast<char*>(p.value.data()),
            static_cast<std::streamsize>(sizeof(double) * p.value.size()));
  }
  if (!in) throw std::runtime_error("checkpoint truncated: " + path);
  return info;
}

// ---- architecture file (human-readable structured text) ----

inline std::string architecture_to_text(const DiscreteArchitecture& arch) {
  std::ostringstream os;
  os << "rkdsc-architecture v1\n";
  os << "seed " << arch.seed << "\n";
  os << "config " << arch.config_digest << "\n";
  os << "total_param_count " << arch.total_param_count << "\n";
  os << "layers " << arch.selected.size() << "\n";
  for (std::size_t l = 0; l < arch.selected.size(); ++l) {
    os << "layer " << l << ":";
    for (std::size_t k = 0; k < arch.selected[l].size(); ++k)
      os << " " << arch.selected[l][k] << "=" << arch.selected_ids[l][k];
    os << "\n";
  }
  return os.str();
}

inline DiscreteArchitecture architecture_from_text(const std::string& body) {
  std::istringstream in(body);
  std::string line;
  if (!std::getline(in, line) || line != "rkdsc-architecture v1")
    throw std::runtime_error("bad architecture file header");
  DiscreteArchitecture arch;
  std::size_t nlayers = 0;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "seed")
      ls >> arch.seed;
    else if (key == "config")
      ls >> arch.config_digest;
    else if (key == "total_param_count")
      ls >> arch.total_param_count;
    else if (key == "layers")
      ls >> nlayers;
    else if (key == "layer") {
      int l = 0;
      char colon = 0;
      ls >> l >> colon;  // layer index then remaining tokens
      std::vector<int> sel;
      std::vector<std::string> ids;
      std::string tok;
      while (ls >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) throw std::runtime_error("bad architecture layer token: " + tok);
        sel.push_back(std::stoi(tok.substr(0, eq)));
        ids.push_back(tok.substr(eq + 1));
      }
      arch.selected.push_back(std::move(sel));
      arch.selected_ids.push_back(std::move(ids));
    }
  }
  if (arch.selected.size() != nlayers)
    throw std::runtime_error("architecture file layer count mismatch");
  return arch;
}

// ---- CSV emission (fixed formatting for reproducible artifacts) ----

inline std::string sweep_to_csv(const SweepResult& r) {
  std::ostringstream os;
  os << "snr_db,top1_accuracy,kd_loss,re_loss,task_loss,num_eval_samples\n";
  for (const auto& row : r.rows)
    os << fmt_double(row.snr_db) << "," << fmt_double(row.accuracy) << ","
       << fmt_double(row.kd) << "," << fmt_double(row.re) << ","
       << fmt_double(row.task) << "," << row.num_eval_samples << "\n";
  return os.str();
}

inline std::string search_log_to_csv(const std::vector<SearchLogRow>& log) {
  std::ostringstream os;
  os << "epoch,l_val,sum_j,per_layer_argmax\n";
  for (const auto& row : log) {
    os << row.epoch << "," << fmt_double(row.l_val) << "," << fmt_double(row.sum_j) << ",";
    for (std::size_t i = 0; i < row.per_layer_argmax.size(); ++i)
      os << (i ? ";" : "") << row.per_layer_argmax[i];
    os << "\n";
  }
  return os.str();
}

inline std::string stage2_log_to_csv(const std::vector<Stage2LogRow>& log) {
  std::ostringstream os;
  os << "epoch,joint_loss,kd_loss,re_loss,task_loss,mean_snr_db\n";
  for (const auto& row : log)
    os << row.epoch << "," << fmt_double(row.joint) << "," << fmt_double(row.kd) << ","
       << fmt_double(row.re) << "," << fmt_double(row.task) << ","
       << fmt_double(row.mean_snr_db) << "\n";
  return os.str();
}

inline std::string stage1_log_to_csv(const std::vector<double>& losses) {
  std::ostringstream os;
  os << "epoch,kd_loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i)
    os << i << "," << fmt_double(losses[i]) << "\n";
  return os.str();
}

inline std::string ablation_to_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "compression_ratio,top1_accuracy,transmitted_dim\n";
  for (const auto& r : rows)
    os << fmt_double(r.ratio) << "," << fmt_double(r.accuracy) << "," << r.transmitted_dim << "\n";
  return os.str();
}

// ---- minimal SVG line plot ----

struct PlotSeries {
  std::string label;
  std::vector<double> x, y;
};

inline std::string line_plot_svg(const std::string& title, const std::string& xlabel,
                                 const std::string& ylabel,
                                 const std::vector<PlotSeries>& series) {
  const int W = 640, H = 440, ml = 70, mr = 20, mt = 50, mb = 60;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  if (xmax <= xmin) xmax = xmin + 1;
  if (ymax <= ymin) ymax = ymin + 1;
  auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (W - ml - mr); };
  auto py = [&](double y) { return H - mb - (y - ymin) / (ymax - ymin) * (H - mt - mb); };
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  std::ostringstream os;
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
  os << "<rect width='100%' height='100%' fill='white'/>\n";
  os << "<text x='" << W / 2 << "' y='25' text-anchor='middle' font-size='16'>" << title << "</text>\n";
  os << "<line x1='" << ml << "' y1='" << H - mb << "' x2='" << W - mr << "' y2='" << H - mb << "' stroke='black'/>\n";
  os << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << H - mb << "' stroke='black'/>\n";
  os << "<text x='" << W / 2 << "' y='" << H - 15 << "' text-anchor='middle' font-size='13'>" << xlabel << "</text>\n";
  os << "<text x='18' y='" << H / 2 << "' text-anchor='middle' font-size='13' transform='rotate(-90 18 "
     << H / 2 << ")'>" << ylabel << "</text>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = xmin + k * (xmax - xmin) / 4;
    const double yv = ymin + k * (ymax - ymin) / 4;
    os << "<text x='" << px(xv) << "' y='" << H - mb + 18 << "' text-anchor='middle' font-size='11'>"
       << fmt_double(xv, 4) << "</text>\n";
    os << "<text x='" << ml - 8 << "' y='" << py(yv) + 4 << "' text-anchor='end' font-size='11'>"
       << fmt_double(yv, 4) << "</text>\n";
  }
  int si = 0;
  for (const auto& s : series) {
    const char* color = colors[si % 5];
    os << "<polyline fill='none' stroke='" << color << "' stroke-width='2' points='";
    for (std::size_t i = 0; i < s.x.size(); ++i)
      os << px(s.x[i]) << "," << py(s.y[i]) << " ";
    os << "'/>\n";
    for (std::size_t i = 0; i < s.x.size(); ++i)
      os << "<circle cx='" << px(s.x[i]) << "' cy='" << py(s.y[i]) << "' r='3' fill='" << color << "'/>\n";
    os << "<text x='" << W - mr - 10 << "' y='" << mt + 16 * si << "' text-anchor='end' font-size='12' fill='"
       << color << "'>" << s.label << "</text>\n";
    ++si;
  }
  os << "</svg>\n";
  return os.str();
}

inline std::uint64_t file_digest(const std::string& path) {
  Fnv1a h;
  h.update(read_text_file(path));
  return h.digest();
}

}  // namespace rkdsc
