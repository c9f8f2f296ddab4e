#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

// Reverse-mode autodiff over dense matrices. A Tape owns a DAG of nodes
// created in topological order; backward() walks it in reverse. Vectors are
// n x 1 matrices, scalars are 1 x 1.
namespace rkdsc::ad {

using Mat = Eigen::MatrixXd;

struct Var {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

class Tape {
 public:
  Var leaf(Mat value) {
    nodes_.push_back(Node{std::move(value), Mat(), nullptr});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  // Generic node; `back` receives the upstream gradient and accumulates into
  // parents via Tape::accumulate.
  Var make(Mat value, std::function<void(Tape&, const Mat&)> back) {
    nodes_.push_back(Node{std::move(value), Mat(), std::move(back)});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  const Mat& val(Var v) const { return nodes_.at(v.idx).value; }

  const Mat& grad(Var v) const {
    Node& n = const_cast<Node&>(nodes_.at(v.idx));
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  void accumulate(Var v, const Mat& g) {
    Node& n = nodes_.at(v.idx);
    if (n.grad.size() == 0)
      n.grad = g;
    else
      n.grad += g;
  }

  void backward(Var root) {
    Node& r = nodes_.at(root.idx);
    if (r.value.rows() != 1 || r.value.cols() != 1)
      throw std::invalid_argument("backward root must be a scalar");
    accumulate(root, Mat::Ones(1, 1));
    for (int i = root.idx; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.back && n.grad.size() != 0) n.back(*this, n.grad);
    }
  }

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    std::function<void(Tape&, const Mat&)> back;
  };
  std::vector<Node> nodes_;
};

inline void check_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string("shape mismatch in ") + op);
}

inline Var add(Tape& t, Var a, Var b) {
  check_same_shape(t.val(a), t.val(b), "add");
  return t.make(t.val(a) + t.val(b), [a, b](Tape& t, const Mat& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

inline Var sub(Tape& t, Var a, Var b) {
  check_same_shape(t.val(a), t.val(b), "sub");
  return t.make(t.val(a) - t.val(b), [a, b](Tape& t, const Mat& g) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

inline Var cmul(Tape& t, Var a, Var b) {
  check_same_shape(t.val(a), t.val(b), "cmul");
  return t.make(t.val(a).cwiseProduct(t.val(b)), [a, b](Tape& t, const Mat& g) {
    t.accumulate(a, g.cwiseProduct(t.val(b)));
    t.accumulate(b, g.cwiseProduct(t.val(a)));
  });
}

inline Var smul(Tape& t, Var a, double c) {
  return t.make(t.val(a) * c,
                [a, c](Tape& t, const Mat& g) { t.accumulate(a, g * c); });
}

inline Var sadd(Tape& t, Var a, double c) {
  return t.make(t.val(a).array() + c,
                [a](Tape& t, const Mat& g) { t.accumulate(a, g); });
}

inline Var matmul(Tape& t, Var a, Var b) {
  if (t.val(a).cols() != t.val(b).rows())
    throw std::invalid_argument("shape mismatch in matmul");
  return t.make(t.val(a) * t.val(b), [a, b](Tape& t, const Mat& g) {
    t.accumulate(a, g * t.val(b).transpose());
    t.accumulate(b, t.val(a).transpose() * g);
  });
}

// A^T * B
inline Var matmul_tn(Tape& t, Var a, Var b) {
  if (t.val(a).rows() != t.val(b).rows())
    throw std::invalid_argument("shape mismatch in matmul_tn");
  return t.make(t.val(a).transpose() * t.val(b), [a, b](Tape& t, const Mat& g) {
    t.accumulate(a, t.val(b) * g.transpose());
    t.accumulate(b, t.val(a) * g);
  });
}

// Broadcast a column vector across the columns of X.
inline Var add_colwise(Tape& t, Var x, Var b) {
  if (t.val(b).cols() != 1 || t.val(b).rows() != t.val(x).rows())
    throw std::invalid_argument("shape mismatch in add_colwise");
  Mat out = t.val(x);
  out.colwise() += Eigen::VectorXd(t.val(b).col(0));
  return t.make(std::move(out), [x, b](Tape& t, const Mat& g) {
    t.accumulate(x, g);
    t.accumulate(b, g.rowwise().sum());
  });
}

inline Var relu(Tape& t, Var a) {
  return t.make(t.val(a).cwiseMax(0.0), [a](Tape& t, const Mat& g) {
    t.accumulate(a, (t.val(a).array() > 0.0).cast<double>().matrix().cwiseProduct(g));
  });
}

inline Var sigmoid(Tape& t, Var a) {
  Mat s = (1.0 / (1.0 + (-t.val(a).array()).exp())).matrix();
  return t.make(s, [a, s](Tape& t, const Mat& g) {
    t.accumulate(a, g.cwiseProduct(
                        (s.array() * (1.0 - s.array())).matrix()));
  });
}

// Column-wise softmax (each column sums to 1).
inline Var softmax_cols(Tape& t, Var a) {
  Mat out = t.val(a);
  for (Eigen::Index c = 0; c < out.cols(); ++c) {
    Eigen::ArrayXd col = out.col(c).array();
    col -= col.maxCoeff();
    col = col.exp();
    out.col(c) = (col / col.sum()).matrix();
  }
  return t.make(out, [a, out](Tape& t, const Mat& g) {
    Mat ga(out.rows(), out.cols());
    for (Eigen::Index c = 0; c < out.cols(); ++c) {
      const double dot = out.col(c).dot(g.col(c));
      ga.col(c) = out.col(c).cwiseProduct(g.col(c) - Mat::Constant(out.rows(), 1, dot));
    }
    t.accumulate(a, ga);
  });
}

// Column-wise layer normalization with learned scale/shift.
inline Var layernorm_cols(Tape& t, Var x, Var gamma, Var beta,
                          double eps = 1e-6) {
  const Mat& X = t.val(x);
  const Eigen::Index n = X.rows();
  if (t.val(gamma).rows() != n || t.val(beta).rows() != n)
    throw std::invalid_argument("shape mismatch in layernorm_cols");
  Mat xhat(n, X.cols());
  Eigen::VectorXd inv_std(X.cols());
  for (Eigen::Index c = 0; c < X.cols(); ++c) {
    const double mu = X.col(c).mean();
    const Eigen::ArrayXd d = X.col(c).array() - mu;
    const double var = d.square().mean();
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std(c) = is;
    xhat.col(c) = (d * is).matrix();
  }
  Mat out = xhat;
  for (Eigen::Index c = 0; c < out.cols(); ++c)
    out.col(c) = out.col(c).cwiseProduct(t.val(gamma).col(0)) + t.val(beta).col(0);
  return t.make(out, [x, gamma, beta, xhat, inv_std](Tape& t, const Mat& g) {
    const Eigen::Index n = xhat.rows();
    Mat gx(n, xhat.cols());
    Mat ggamma = Mat::Zero(n, 1);
    Mat gbeta = Mat::Zero(n, 1);
    for (Eigen::Index c = 0; c < xhat.cols(); ++c) {
      Eigen::VectorXd dxhat = g.col(c).cwiseProduct(t.val(gamma).col(0));
      const double m1 = dxhat.mean();
      const double m2 = dxhat.cwiseProduct(xhat.col(c)).mean();
      gx.col(c) = inv_std(c) *
                  (dxhat.array() - m1 - xhat.col(c).array() * m2).matrix();
      ggamma += g.col(c).cwiseProduct(xhat.col(c));
      gbeta += g.col(c);
    }
    t.accumulate(x, gx);
    t.accumulate(gamma, ggamma);
    t.accumulate(beta, gbeta);
  });
}

inline Var concat_rows(Tape& t, const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
  Eigen::Index rows = 0;
  const Eigen::Index cols = t.val(parts[0]).cols();
  for (Var p : parts) {
    if (t.val(p).cols() != cols)
      throw std::invalid_argument("concat_rows: column mismatch");
    rows += t.val(p).rows();
  }
  Mat out(rows, cols);
  Eigen::Index r = 0;
  for (Var p : parts) {
    out.middleRows(r, t.val(p).rows()) = t.val(p);
    r += t.val(p).rows();
  }
  return t.make(std::move(out), [parts](Tape& t, const Mat& g) {
    Eigen::Index r = 0;
    for (Var p : parts) {
      const Eigen::Index n = t.val(p).rows();
      t.accumulate(p, g.middleRows(r, n));
      r += n;
    }
  });
}

inline Var concat_cols(Tape& t, const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
  const Eigen::Index rows = t.val(parts[0]).rows();
  Eigen::Index cols = 0;
  for (Var p : parts) {
    if (t.val(p).rows() != rows)
      throw std::invalid_argument("concat_cols: row mismatch");
    cols += t.val(p).cols();
  }
  Mat out(rows, cols);
  Eigen::Index c = 0;
  for (Var p : parts) {
    out.middleCols(c, t.val(p).cols()) = t.val(p);
    c += t.val(p).cols();
  }
  return t.make(std::move(out), [parts](Tape& t, const Mat& g) {
    Eigen::Index c = 0;
    for (Var p : parts) {
      const Eigen::Index n = t.val(p).cols();
      t.accumulate(p, g.middleCols(c, n));
      c += n;
    }
  });
}

inline Var slice_rows(Tape& t, Var a, Eigen::Index r0, Eigen::Index n) {
  if (r0 < 0 || n < 0 || r0 + n > t.val(a).rows())
    throw std::invalid_argument("slice_rows out of range");
  return t.make(t.val(a).middleRows(r0, n), [a, r0, n](Tape& t, const Mat& g) {
    Mat ga = Mat::Zero(t.val(a).rows(), t.val(a).cols());
    ga.middleRows(r0, n) = g;
    t.accumulate(a, ga);
  });
}

inline Var slice_cols(Tape& t, Var a, Eigen::Index c0, Eigen::Index n) {
  if (c0 < 0 || n < 0 || c0 + n > t.val(a).cols())
    throw std::invalid_argument("slice_cols out of range");
  return t.make(t.val(a).middleCols(c0, n), [a, c0, n](Tape& t, const Mat& g) {
    Mat ga = Mat::Zero(t.val(a).rows(), t.val(a).cols());
    ga.middleCols(c0, n) = g;
    t.accumulate(a, ga);
  });
}

inline Var reshape(Tape& t, Var a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != t.val(a).size())
    throw std::invalid_argument("reshape size mismatch");
  Mat out = Eigen::Map<const Mat>(t.val(a).data(), rows, cols);
  return t.make(std::move(out), [a](Tape& t, const Mat& g) {
    t.accumulate(a, Eigen::Map<const Mat>(g.data(), t.val(a).rows(),
                                          t.val(a).cols()));
  });
}

inline Var sum_all(Tape& t, Var a) {
  return t.make(Mat::Constant(1, 1, t.val(a).sum()),
                [a](Tape& t, const Mat& g) {
                  t.accumulate(a, Mat::Constant(t.val(a).rows(),
                                                t.val(a).cols(), g(0, 0)));
                });
}

// Multiply a matrix by a 1x1 variable.
inline Var scale_by(Tape& t, Var x, Var s) {
  if (t.val(s).size() != 1)
    throw std::invalid_argument("scale_by: scale must be 1x1");
  const double c = t.val(s)(0, 0);
  return t.make(t.val(x) * c, [x, s, c](Tape& t, const Mat& g) {
    t.accumulate(x, g * c);
    t.accumulate(s, Mat::Constant(1, 1, g.cwiseProduct(t.val(x)).sum()));
  });
}

// Elementwise power of a 1x1 variable (used for sqrt / reciprocal).
inline Var pow_scalar(Tape& t, Var s, double p) {
  if (t.val(s).size() != 1)
    throw std::invalid_argument("pow_scalar: input must be 1x1");
  const double v = t.val(s)(0, 0);
  const double out = std::pow(v, p);
  return t.make(Mat::Constant(1, 1, out), [s, v, p](Tape& t, const Mat& g) {
    t.accumulate(s, Mat::Constant(1, 1, g(0, 0) * p * std::pow(v, p - 1.0)));
  });
}

// Mean cross-entropy over columns of a logit matrix (classes x batch).
inline Var cross_entropy_logits(Tape& t, Var logits,
                                const std::vector<int>& labels) {
  const Mat& L = t.val(logits);
  if (static_cast<Eigen::Index>(labels.size()) != L.cols())
    throw std::invalid_argument("cross_entropy_logits: label count mismatch");
  const Eigen::Index B = L.cols();
  Mat probs(L.rows(), L.cols());
  double loss = 0.0;
  for (Eigen::Index c = 0; c < B; ++c) {
    if (labels[c] < 0 || labels[c] >= L.rows())
      throw std::invalid_argument("cross_entropy_logits: label out of range");
    Eigen::ArrayXd col = L.col(c).array();
    const double mx = col.maxCoeff();
    const Eigen::ArrayXd e = (col - mx).exp();
    const double z = e.sum();
    probs.col(c) = (e / z).matrix();
    loss -= (L(labels[c], c) - mx - std::log(z));
  }
  loss /= static_cast<double>(B);
  return t.make(Mat::Constant(1, 1, loss),
                [logits, probs, labels](Tape& t, const Mat& g) {
                  Mat gl = probs;
                  for (Eigen::Index c = 0; c < gl.cols(); ++c)
                    gl(labels[c], c) -= 1.0;
                  t.accumulate(logits, gl * (g(0, 0) / gl.cols()));
                });
}

// Batch-mean, per-dimension-mean squared error: sum((a-b)^2) / (N*M).
inline Var mse(Tape& t, Var a, Var b) {
  check_same_shape(t.val(a), t.val(b), "mse");
  Var d = sub(t, a, b);
  Var s = sum_all(t, cmul(t, d, d));
  return smul(t, s, 1.0 / static_cast<double>(t.val(a).size()));
}

}  // namespace rkdsc::ad
