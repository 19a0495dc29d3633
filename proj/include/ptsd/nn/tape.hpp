#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "ptsd/common.hpp"
#include "ptsd/mat.hpp"
#include "ptsd/rng.hpp"

namespace ptsd {
namespace nn {

// Small define-by-run reverse-mode autograd over dense matrices. Each op
// records a closure; backward() replays them in reverse. Attention recomputes
// its softmax in the backward pass instead of storing T x T probabilities.

template <typename Real>
struct Parameter {
  std::string name;
  Mat<Real> value;
  Mat<Real> grad;
  Mat<Real> m, v;  // Adam moments, allocated on first step

  void zero_grad() { grad = Mat<Real>::Zero(value.rows(), value.cols()); }
};

template <typename Real>
struct Node {
  Mat<Real> value;
  Mat<Real> grad;
  bool requires_grad = false;
  Parameter<Real>* param = nullptr;

  void ensure_grad() {
    if (grad.rows() != value.rows() || grad.cols() != value.cols())
      grad = Mat<Real>::Zero(value.rows(), value.cols());
  }
};

template <typename Real>
using Var = std::shared_ptr<Node<Real>>;

// Sums terms in ascending value order: the result depends only on the
// multiset of terms, not their input order. Used for query self-attention so
// permuting the query set permutes outputs bit-exactly.
template <typename Real>
Real canonical_sum(std::vector<Real>& terms) {
  std::sort(terms.begin(), terms.end());
  Real acc = 0;
  for (Real t : terms) acc += t;
  return acc;
}

// Runs fn(0..n-1) across up to two worker threads. Callers only use this for
// work on disjoint head blocks, so scheduling cannot change any result.
inline void parallel_heads(int n, const std::function<void(int)>& fn) {
  static const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (hw <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  const int workers = static_cast<int>(std::min<unsigned>(hw, static_cast<unsigned>(n)));
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  auto run = [&](int worker) {
    for (int i = worker; i < n; i += workers) fn(i);
  };
  for (int w = 1; w < workers; ++w) pool.emplace_back(run, w);
  run(0);
  for (auto& t : pool) t.join();
}

template <typename Real>
class Tape {
 public:
  explicit Tape(bool training = false, Rng* rng = nullptr, bool grad_enabled = true)
      : training_(training), rng_(rng), grad_enabled_(grad_enabled) {}

  bool training() const { return training_; }

  Var<Real> constant(Mat<Real> value) {
    auto n = std::make_shared<Node<Real>>();
    n->value = std::move(value);
    return n;
  }

  // Leaf for a persistent parameter; its gradient lands in p.grad.
  Var<Real> leaf(Parameter<Real>& p) {
    auto it = leaves_.find(&p);
    if (it != leaves_.end()) return it->second;
    auto n = std::make_shared<Node<Real>>();
    n->value = p.value;
    n->param = &p;
    n->requires_grad = grad_enabled_;
    if (grad_enabled_) {
      ops_.push_back([n]() {
        if (n->grad.size() == 0) return;
        if (n->param->grad.size() == 0) n->param->zero_grad();
        n->param->grad += n->grad;
      });
    }
    leaves_.emplace(&p, n);
    return n;
  }

  // row_stable selects a scalar kernel whose per-row bits depend only on the
  // row's contents (Eigen's gemm/gemv pick different reduction orders by
  // shape and alignment). Used on the decoder's query matrices; gemm
  // otherwise.
  Var<Real> matmul(const Var<Real>& a, const Var<Real>& b, bool row_stable = false) {
    Mat<Real> out;
    if (row_stable) {
      out = Mat<Real>::Zero(a->value.rows(), b->value.cols());
      for (Eigen::Index i = 0; i < out.rows(); ++i)
        for (Eigen::Index j = 0; j < out.cols(); ++j) {
          Real acc = 0;
          for (Eigen::Index k = 0; k < a->value.cols(); ++k)
            acc += a->value(i, k) * b->value(k, j);
          out(i, j) = acc;
        }
    } else {
      out = a->value * b->value;
    }
    auto c = fresh(std::move(out), {a, b});
    record(c, [a, b, c]() {
      if (a->requires_grad) {
        a->ensure_grad();
        a->grad.noalias() += c->grad * b->value.transpose();
      }
      if (b->requires_grad) {
        b->ensure_grad();
        b->grad.noalias() += a->value.transpose() * c->grad;
      }
    });
    return c;
  }

  // C = A * B^T
  Var<Real> matmul_nt(const Var<Real>& a, const Var<Real>& b, bool row_stable = false) {
    Mat<Real> out;
    if (row_stable) {
      out = Mat<Real>::Zero(a->value.rows(), b->value.rows());
      for (Eigen::Index i = 0; i < out.rows(); ++i)
        for (Eigen::Index j = 0; j < out.cols(); ++j) {
          Real acc = 0;
          for (Eigen::Index k = 0; k < a->value.cols(); ++k)
            acc += a->value(i, k) * b->value(j, k);
          out(i, j) = acc;
        }
    } else {
      out = a->value * b->value.transpose();
    }
    auto c = fresh(std::move(out), {a, b});
    record(c, [a, b, c]() {
      if (a->requires_grad) {
        a->ensure_grad();
        a->grad.noalias() += c->grad * b->value;
      }
      if (b->requires_grad) {
        b->ensure_grad();
        b->grad.noalias() += c->grad.transpose() * a->value;
      }
    });
    return c;
  }

  Var<Real> add(const Var<Real>& a, const Var<Real>& b) {
    auto c = fresh(a->value + b->value, {a, b});
    record(c, [a, b, c]() {
      if (a->requires_grad) {
        a->ensure_grad();
        a->grad += c->grad;
      }
      if (b->requires_grad) {
        b->ensure_grad();
        b->grad += c->grad;
      }
    });
    return c;
  }

  // Broadcast a 1 x n bias over every row of A.
  Var<Real> add_rowvec(const Var<Real>& a, const Var<Real>& bias) {
    Mat<Real> out = a->value;
    out.rowwise() += Eigen::Matrix<Real, 1, Eigen::Dynamic>(bias->value.row(0));
    auto c = fresh(std::move(out), {a, bias});
    record(c, [a, bias, c]() {
      if (a->requires_grad) {
        a->ensure_grad();
        a->grad += c->grad;
      }
      if (bias->requires_grad) {
        bias->ensure_grad();
        bias->grad.row(0) += c->grad.colwise().sum();
      }
    });
    return c;
  }

  Var<Real> scale(const Var<Real>& a, Real s) {
    auto c = fresh(a->value * s, {a});
    record(c, [a, c, s]() {
      if (a->requires_grad) {
        a->ensure_grad();
        a->grad += c->grad * s;
      }
    });
    return c;
  }

  Var<Real> relu(const Var<Real>& a) {
    auto c = fresh(a->value.cwiseMax(Real(0)), {a});
    record(c, [a, c]() {
      if (!a->requires_grad) return;
      a->ensure_grad();
      a->grad.array() += c->grad.array() * (a->value.array() > Real(0)).template cast<Real>();
    });
    return c;
  }

  Var<Real> sigmoid(const Var<Real>& a) {
    Mat<Real> s = a->value.unaryExpr([](Real x) { return Real(1) / (Real(1) + std::exp(-x)); });
    auto c = fresh(std::move(s), {a});
    record(c, [a, c]() {
      if (!a->requires_grad) return;
      a->ensure_grad();
      a->grad.array() += c->grad.array() * c->value.array() * (Real(1) - c->value.array());
    });
    return c;
  }

  // Hard clamp; gradient is passed only strictly inside (lo, hi).
  Var<Real> clamp(const Var<Real>& a, Real lo, Real hi) {
    auto c = fresh(a->value.cwiseMax(lo).cwiseMin(hi), {a});
    record(c, [a, c, lo, hi]() {
      if (!a->requires_grad) return;
      a->ensure_grad();
      a->grad.array() += c->grad.array() *
                         ((a->value.array() > lo) && (a->value.array() < hi)).template cast<Real>();
    });
    return c;
  }

  // Row-wise layer norm with learnable gain and bias (both 1 x n). The
  // statistics are accumulated scalar-sequentially so a row's result depends
  // only on its contents, never on its position in the matrix.
  Var<Real> layer_norm(const Var<Real>& x, const Var<Real>& gain, const Var<Real>& bias,
                       Real eps = Real(1e-5)) {
    const auto& v = x->value;
    const Eigen::Index rows = v.rows(), cols = v.cols();
    Mat<Real> xhat(rows, cols);
    Eigen::Matrix<Real, Eigen::Dynamic, 1> inv_std(rows);
    for (Eigen::Index i = 0; i < rows; ++i) {
      Real sum = 0;
      for (Eigen::Index j = 0; j < cols; ++j) sum += v(i, j);
      const Real mean = sum / static_cast<Real>(cols);
      Real var_sum = 0;
      for (Eigen::Index j = 0; j < cols; ++j) var_sum += (v(i, j) - mean) * (v(i, j) - mean);
      inv_std(i) = Real(1) / std::sqrt(var_sum / static_cast<Real>(cols) + eps);
      for (Eigen::Index j = 0; j < cols; ++j) xhat(i, j) = (v(i, j) - mean) * inv_std(i);
    }
    Mat<Real> out(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j)
        out(i, j) = xhat(i, j) * gain->value(0, j) + bias->value(0, j);
    auto c = fresh(std::move(out), {x, gain, bias});
    record(c, [x, gain, bias, c, xhat, inv_std]() {
      const Eigen::Index rows = xhat.rows(), cols = xhat.cols();
      if (gain->requires_grad) {
        gain->ensure_grad();
        gain->grad.row(0) += (c->grad.array() * xhat.array()).colwise().sum().matrix();
      }
      if (bias->requires_grad) {
        bias->ensure_grad();
        bias->grad.row(0) += c->grad.colwise().sum();
      }
      if (x->requires_grad) {
        x->ensure_grad();
        for (Eigen::Index i = 0; i < rows; ++i) {
          Eigen::Matrix<Real, 1, Eigen::Dynamic> dxhat =
              c->grad.row(i).cwiseProduct(gain->value.row(0));
          const Real m1 = dxhat.mean();
          const Real m2 = dxhat.cwiseProduct(xhat.row(i)).mean();
          x->grad.row(i) +=
              ((dxhat.array() - m1 - xhat.row(i).array() * m2) * inv_std(i)).matrix();
        }
      }
    });
    return c;
  }

  Var<Real> softmax_rows(const Var<Real>& a) {
    Mat<Real> p = a->value;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      const Real mx = p.row(i).maxCoeff();
      p.row(i) = (p.row(i).array() - mx).exp();
      p.row(i) /= p.row(i).sum();
    }
    auto c = fresh(std::move(p), {a});
    record(c, [a, c]() {
      if (!a->requires_grad) return;
      a->ensure_grad();
      for (Eigen::Index i = 0; i < c->value.rows(); ++i) {
        const Real dot = c->grad.row(i).cwiseProduct(c->value.row(i)).sum();
        a->grad.row(i) +=
            (c->value.row(i).array() * (c->grad.row(i).array() - dot)).matrix();
      }
    });
    return c;
  }

  // Inverted dropout; identity when the tape is not in training mode.
  Var<Real> dropout(const Var<Real>& a, double p) {
    if (!training_ || p <= 0.0) return a;
    if (!rng_) throw std::runtime_error("dropout: training tape has no rng");
    const Real keep_scale = Real(1.0 / (1.0 - p));
    Mat<Real> mask(a->value.rows(), a->value.cols());
    for (Eigen::Index i = 0; i < mask.rows(); ++i)
      for (Eigen::Index j = 0; j < mask.cols(); ++j)
        mask(i, j) = rng_->uniform() < p ? Real(0) : keep_scale;
    auto c = fresh(a->value.cwiseProduct(mask), {a});
    record(c, [a, c, mask]() {
      if (!a->requires_grad) return;
      a->ensure_grad();
      a->grad += c->grad.cwiseProduct(mask);
    });
    return c;
  }

  // Multi-head scaled dot-product attention on post-projection q/k/v
  // (head blocks are contiguous column ranges). order_invariant selects
  // canonical-order reductions so the output is exactly equivariant under
  // permutations of the query (and matching key/value) rows.
  Var<Real> attend(const Var<Real>& q, const Var<Real>& k, const Var<Real>& v, int n_heads,
                   bool order_invariant = false) {
    const Eigen::Index tq = q->value.rows(), tk = k->value.rows(), d = q->value.cols();
    if (d % n_heads != 0) throw std::runtime_error("attend: width not divisible by heads");
    const Eigen::Index dh = d / n_heads;
    const Real scale = Real(1) / std::sqrt(static_cast<Real>(dh));

    // thread spawn only pays off for encoder-sized attention
    const bool parallel = tq * tk * d >= (1 << 20);
    auto for_heads = [&](const std::function<void(int)>& fn) {
      if (parallel) {
        parallel_heads(n_heads, fn);
      } else {
        for (int h = 0; h < n_heads; ++h) fn(h);
      }
    };

    Mat<Real> out(tq, d);
    for_heads([&](int h) {
      auto qh = q->value.middleCols(h * dh, dh);
      auto kh = k->value.middleCols(h * dh, dh);
      auto vh = v->value.middleCols(h * dh, dh);
      Mat<Real> probs = head_probs(qh, kh, scale, order_invariant);
      if (order_invariant) {
        // per output element, sum contributions in canonical order
        std::vector<Real> terms(tk);
        for (Eigen::Index i = 0; i < tq; ++i) {
          for (Eigen::Index cix = 0; cix < dh; ++cix) {
            for (Eigen::Index j = 0; j < tk; ++j) terms[j] = probs(i, j) * vh(j, cix);
            out(i, h * dh + cix) = canonical_sum(terms);
          }
        }
      } else {
        out.middleCols(h * dh, dh).noalias() = probs * vh;
      }
    });

    auto c = fresh(std::move(out), {q, k, v});
    record(c, [q, k, v, c, n_heads, dh, scale, order_invariant, parallel]() {
      const bool need = q->requires_grad || k->requires_grad || v->requires_grad;
      if (!need) return;
      q->ensure_grad();
      k->ensure_grad();
      v->ensure_grad();
      auto for_heads = [&](const std::function<void(int)>& fn) {
        if (parallel) {
          parallel_heads(n_heads, fn);
        } else {
          for (int h = 0; h < n_heads; ++h) fn(h);
        }
      };
      for_heads([&](int h) {
        auto qh = q->value.middleCols(h * dh, dh);
        auto kh = k->value.middleCols(h * dh, dh);
        auto vh = v->value.middleCols(h * dh, dh);
        Mat<Real> probs = head_probs(qh, kh, scale, order_invariant);
        Mat<Real> d_out = c->grad.middleCols(h * dh, dh);
        v->grad.middleCols(h * dh, dh).noalias() += probs.transpose() * d_out;
        Mat<Real> d_probs = d_out * vh.transpose();
        // softmax backward, rowwise
        for (Eigen::Index i = 0; i < probs.rows(); ++i) {
          const Real dot = d_probs.row(i).cwiseProduct(probs.row(i)).sum();
          d_probs.row(i) =
              (probs.row(i).array() * (d_probs.row(i).array() - dot)).matrix();
        }
        q->grad.middleCols(h * dh, dh).noalias() += d_probs * kh * scale;
        k->grad.middleCols(h * dh, dh).noalias() += d_probs.transpose() * qh * scale;
      });
    });
    return c;
  }

  // Gather rows; backward scatter-adds.
  Var<Real> select_rows(const Var<Real>& a, std::vector<int> idx) {
    Mat<Real> out(static_cast<Eigen::Index>(idx.size()), a->value.cols());
    for (size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] < 0 || idx[i] >= a->value.rows())
        throw ValidationError("select_rows: index " + std::to_string(idx[i]) + " out of range [0, " +
                              std::to_string(a->value.rows()) + ")");
      out.row(static_cast<Eigen::Index>(i)) = a->value.row(idx[i]);
    }
    auto c = fresh(std::move(out), {a});
    record(c, [a, c, idx = std::move(idx)]() {
      if (!a->requires_grad) return;
      a->ensure_grad();
      for (size_t i = 0; i < idx.size(); ++i)
        a->grad.row(idx[i]) += c->grad.row(static_cast<Eigen::Index>(i));
    });
    return c;
  }

  Var<Real> vstack(const std::vector<Var<Real>>& parts) {
    if (parts.empty()) throw std::runtime_error("vstack: empty");
    Eigen::Index rows = 0;
    for (const auto& p : parts) rows += p->value.rows();
    Mat<Real> out(rows, parts[0]->value.cols());
    Eigen::Index at = 0;
    for (const auto& p : parts) {
      out.middleRows(at, p->value.rows()) = p->value;
      at += p->value.rows();
    }
    auto c = fresh(std::move(out), parts);
    record(c, [parts, c]() {
      Eigen::Index at = 0;
      for (const auto& p : parts) {
        if (p->requires_grad) {
          p->ensure_grad();
          p->grad += c->grad.middleRows(at, p->value.rows());
        }
        at += p->value.rows();
      }
    });
    return c;
  }

  // Rows shifted down by `offset` (up if negative); vacated rows are zero.
  Var<Real> shift_rows(const Var<Real>& a, int offset) {
    const Eigen::Index rows = a->value.rows(), cols = a->value.cols();
    Mat<Real> out = Mat<Real>::Zero(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      const Eigen::Index src = i - offset;
      if (src >= 0 && src < rows) out.row(i) = a->value.row(src);
    }
    auto c = fresh(std::move(out), {a});
    record(c, [a, c, offset]() {
      if (!a->requires_grad) return;
      a->ensure_grad();
      const Eigen::Index rows = a->value.rows();
      for (Eigen::Index i = 0; i < rows; ++i) {
        const Eigen::Index src = i - offset;
        if (src >= 0 && src < rows) a->grad.row(src) += c->grad.row(i);
      }
    });
    return c;
  }

  Var<Real> transpose(const Var<Real>& a) {
    auto c = fresh(a->value.transpose(), {a});
    record(c, [a, c]() {
      if (!a->requires_grad) return;
      a->ensure_grad();
      a->grad += c->grad.transpose();
    });
    return c;
  }

  // Column-wise mean over rows: T x D -> 1 x D.
  Var<Real> mean_rows(const Var<Real>& a) {
    const Real inv = Real(1) / static_cast<Real>(a->value.rows());
    Mat<Real> out = a->value.colwise().sum() * inv;
    auto c = fresh(std::move(out), {a});
    record(c, [a, c, inv]() {
      if (!a->requires_grad) return;
      a->ensure_grad();
      a->grad.rowwise() += (c->grad.row(0) * inv);
    });
    return c;
  }

  // <W, A> as a 1 x 1 node; W is a fixed weight matrix.
  Var<Real> weighted_sum(const Var<Real>& a, const Mat<Real>& w) {
    Mat<Real> out(1, 1);
    out(0, 0) = a->value.cwiseProduct(w).sum();
    auto c = fresh(std::move(out), {a});
    record(c, [a, c, w]() {
      if (!a->requires_grad) return;
      a->ensure_grad();
      a->grad += c->grad(0, 0) * w;
    });
    return c;
  }

  // Mean binary cross-entropy over all entries; probabilities are clamped to
  // [eps, 1 - eps] before the logs. Labels are a constant matrix.
  Var<Real> bce_mean(const Var<Real>& probs, const Mat<Real>& labels, Real eps = Real(1e-7)) {
    if (probs->value.rows() != labels.rows() || probs->value.cols() != labels.cols())
      throw ValidationError("bce_mean: prediction/label shape mismatch");
    const Eigen::Index n = labels.size();
    Mat<Real> clipped = probs->value.cwiseMax(eps).cwiseMin(Real(1) - eps);
    Real total = 0;
    for (Eigen::Index i = 0; i < clipped.rows(); ++i)
      for (Eigen::Index j = 0; j < clipped.cols(); ++j)
        total -= labels(i, j) * std::log(clipped(i, j)) +
                 (Real(1) - labels(i, j)) * std::log(Real(1) - clipped(i, j));
    Mat<Real> out(1, 1);
    out(0, 0) = total / static_cast<Real>(n);
    auto c = fresh(std::move(out), {probs});
    record(c, [probs, c, labels, clipped, eps]() {
      if (!probs->requires_grad) return;
      probs->ensure_grad();
      const Real g = c->grad(0, 0) / static_cast<Real>(labels.size());
      for (Eigen::Index i = 0; i < clipped.rows(); ++i)
        for (Eigen::Index j = 0; j < clipped.cols(); ++j) {
          const Real p = clipped(i, j);
          const Real raw = probs->value(i, j);
          if (raw > eps && raw < Real(1) - eps)
            probs->grad(i, j) += g * (p - labels(i, j)) / (p * (Real(1) - p));
        }
    });
    return c;
  }

  void backward(const Var<Real>& loss) {
    if (loss->value.rows() != 1 || loss->value.cols() != 1)
      throw std::runtime_error("backward: loss must be scalar");
    if (!grad_enabled_) throw std::runtime_error("backward: gradients disabled on this tape");
    loss->ensure_grad();
    loss->grad(0, 0) = Real(1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  }

 private:
  template <typename QExpr, typename KExpr>
  static Mat<Real> head_probs(const QExpr& qh, const KExpr& kh, Real scale,
                              bool order_invariant) {
    if (!order_invariant) {
      Mat<Real> s = (qh * kh.transpose()) * scale;
      for (Eigen::Index i = 0; i < s.rows(); ++i) {
        const Real mx = s.row(i).maxCoeff();
        s.row(i) = (s.row(i).array() - mx).exp();
        s.row(i) /= s.row(i).sum();
      }
      return s;
    }
    const Eigen::Index tq = qh.rows(), tk = kh.rows(), dh = qh.cols();
    Mat<Real> p(tq, tk);
    std::vector<Real> terms(tk);
    for (Eigen::Index i = 0; i < tq; ++i) {
      Real mx = -std::numeric_limits<Real>::infinity();
      for (Eigen::Index j = 0; j < tk; ++j) {
        Real dot = 0;
        for (Eigen::Index c = 0; c < dh; ++c) dot += qh(i, c) * kh(j, c);
        p(i, j) = dot * scale;
        mx = std::max(mx, p(i, j));
      }
      for (Eigen::Index j = 0; j < tk; ++j) {
        p(i, j) = std::exp(p(i, j) - mx);
        terms[j] = p(i, j);
      }
      const Real denom = canonical_sum(terms);
      for (Eigen::Index j = 0; j < tk; ++j) p(i, j) /= denom;
    }
    return p;
  }

  Var<Real> fresh(Mat<Real> value, const std::vector<Var<Real>>& inputs) {
    auto n = std::make_shared<Node<Real>>();
    n->value = std::move(value);
    if (grad_enabled_)
      for (const auto& in : inputs)
        if (in->requires_grad) {
          n->requires_grad = true;
          break;
        }
    return n;
  }

  void record(const Var<Real>& out, std::function<void()> fn) {
    if (grad_enabled_ && out->requires_grad) ops_.push_back(std::move(fn));
  }

  bool training_;
  Rng* rng_;
  bool grad_enabled_;
  std::vector<std::function<void()>> ops_;
  std::map<Parameter<Real>*, Var<Real>> leaves_;
};

}  // namespace nn
}  // namespace ptsd
