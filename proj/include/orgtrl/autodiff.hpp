#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "orgtrl/common.hpp"

namespace orgtrl::ad {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct BoolMask {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  std::vector<std::uint8_t> data;  // row-major

  static BoolMask all_true(Eigen::Index r, Eigen::Index c) {
    return BoolMask{r, c, std::vector<std::uint8_t>(static_cast<std::size_t>(r * c), 1)};
  }
  bool at(Eigen::Index r, Eigen::Index c) const {
    return data[static_cast<std::size_t>(r * cols + c)] != 0;
  }
  void set(Eigen::Index r, Eigen::Index c, bool v) {
    data[static_cast<std::size_t>(r * cols + c)] = v ? 1 : 0;
  }
};

// Numerically stable masked softmax of a row vector. Masked entries are
// exactly zero in the output; throws when every entry is masked.
template <typename S>
Eigen::Matrix<S, 1, Eigen::Dynamic> softmax_stable_row(
    const Eigen::Matrix<S, 1, Eigen::Dynamic>& logits, const std::uint8_t* mask = nullptr) {
  const Eigen::Index n = logits.cols();
  S maxv = std::numeric_limits<S>::lowest();
  bool any = false;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (mask && !mask[j]) continue;
    any = true;
    maxv = std::max(maxv, logits(0, j));
  }
  if (!any) throw ValidationError("softmax: all entries masked");
  Eigen::Matrix<S, 1, Eigen::Dynamic> out(1, n);
  S sum = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (mask && !mask[j]) {
      out(0, j) = S(0);
    } else {
      out(0, j) = std::exp(logits(0, j) - maxv);
      sum += out(0, j);
    }
  }
  out /= sum;
  if (mask) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!mask[j]) out(0, j) = S(0);
    }
  }
  return out;
}

template <typename S>
std::vector<S> softmax_stable(const std::vector<S>& logits,
                              const std::vector<std::uint8_t>* mask = nullptr) {
  if (mask && mask->size() != logits.size()) throw ShapeError("softmax: mask size mismatch");
  Eigen::Matrix<S, 1, Eigen::Dynamic> row(1, static_cast<Eigen::Index>(logits.size()));
  for (std::size_t i = 0; i < logits.size(); ++i) row(0, static_cast<Eigen::Index>(i)) = logits[i];
  auto out = softmax_stable_row<S>(row, mask ? mask->data() : nullptr);
  return std::vector<S>(out.data(), out.data() + out.cols());
}

// Named parameters, each value paired with a gradient buffer of identical
// shape plus Adam moment buffers. Iteration follows insertion order.
template <typename S>
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Mat<S> value;
    Mat<S> grad;
    Mat<S> moment1;
    Mat<S> moment2;
  };

  Entry& add(const std::string& name, Mat<S> value) {
    if (index_.count(name)) throw ValidationError("duplicate parameter name: " + name);
    index_[name] = entries_.size();
    entries_.push_back(Entry{name, std::move(value), {}, {}, {}});
    auto& e = entries_.back();
    e.grad = Mat<S>::Zero(e.value.rows(), e.value.cols());
    e.moment1 = Mat<S>::Zero(e.value.rows(), e.value.cols());
    e.moment2 = Mat<S>::Zero(e.value.rows(), e.value.cols());
    return e;
  }

  Entry& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw IndexError("no such parameter: " + name);
    return entries_[it->second];
  }
  const Entry& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw IndexError("no such parameter: " + name);
    return entries_[it->second];
  }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  void zero_grad() {
    for (auto& e : entries_) e.grad.setZero();
  }

  std::size_t coordinate_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += static_cast<std::size_t>(e.value.size());
    return n;
  }

  template <typename T>
  ParameterStore<T> cast() const {
    ParameterStore<T> out;
    for (const auto& e : entries_) out.add(e.name, e.value.template cast<T>());
    return out;
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

// Eager reverse-mode tape over dense matrices. Values are computed at node
// creation; backward() replays recorded closures in reverse order.
template <typename S>
class Tape {
 public:
  const Mat<S>& val(Var v) const { return nodes_[check(v)].value; }
  const Mat<S>& grad(Var v) const { return nodes_[check(v)].grad; }

  Var constant(Mat<S> value) { return push(std::move(value), nullptr); }

  Var input(Mat<S> value) { return push(std::move(value), nullptr); }

  Var param(ParameterStore<S>& store, const std::string& name) {
    auto& entry = store.at(name);
    auto it = param_vars_.find(&entry);
    if (it != param_vars_.end()) return it->second;
    Var v = push(entry.value, nullptr);
    Entry* ep = &entry;
    nodes_[static_cast<std::size_t>(v.id)].back = [v, ep](Tape& t) {
      ep->grad += t.nodes_[static_cast<std::size_t>(v.id)].grad;
    };
    param_vars_[&entry] = v;
    return v;
  }

  Var matmul(Var a, Var b) {
    const auto& A = val(a);
    const auto& B = val(b);
    if (A.cols() != B.rows()) throw ShapeError("matmul: inner dimensions disagree");
    Var v = push(A * B, nullptr);
    nodes_[idx(v)].back = [v, a, b](Tape& t) {
      const auto& g = t.nodes_[t.idx(v)].grad;
      t.nodes_[t.idx(a)].grad.noalias() += g * t.val(b).transpose();
      t.nodes_[t.idx(b)].grad.noalias() += t.val(a).transpose() * g;
    };
    return v;
  }

  Var add(Var a, Var b) {
    const auto& A = val(a);
    const auto& B = val(b);
    if (A.rows() != B.rows() || A.cols() != B.cols()) throw ShapeError("add: shape mismatch");
    Var v = push(A + B, nullptr);
    nodes_[idx(v)].back = [v, a, b](Tape& t) {
      const auto& g = t.nodes_[t.idx(v)].grad;
      t.nodes_[t.idx(a)].grad += g;
      t.nodes_[t.idx(b)].grad += g;
    };
    return v;
  }

  // m + row broadcast over every row of m
  Var add_rowvec(Var m, Var row) {
    const auto& M = val(m);
    const auto& R = val(row);
    if (R.rows() != 1 || R.cols() != M.cols()) throw ShapeError("add_rowvec: bad row shape");
    Mat<S> out = M;
    out.rowwise() += R.row(0);
    Var v = push(std::move(out), nullptr);
    nodes_[idx(v)].back = [v, m, row](Tape& t) {
      const auto& g = t.nodes_[t.idx(v)].grad;
      t.nodes_[t.idx(m)].grad += g;
      t.nodes_[t.idx(row)].grad += g.colwise().sum();
    };
    return v;
  }

  Var mul(Var a, Var b) {
    const auto& A = val(a);
    const auto& B = val(b);
    if (A.rows() != B.rows() || A.cols() != B.cols()) throw ShapeError("mul: shape mismatch");
    Var v = push(A.cwiseProduct(B), nullptr);
    nodes_[idx(v)].back = [v, a, b](Tape& t) {
      const auto& g = t.nodes_[t.idx(v)].grad;
      t.nodes_[t.idx(a)].grad += g.cwiseProduct(t.val(b));
      t.nodes_[t.idx(b)].grad += g.cwiseProduct(t.val(a));
    };
    return v;
  }

  Var scale(Var a, S c) {
    Var v = push(val(a) * c, nullptr);
    nodes_[idx(v)].back = [v, a, c](Tape& t) {
      t.nodes_[t.idx(a)].grad += t.nodes_[t.idx(v)].grad * c;
    };
    return v;
  }

  Var add_scaled(Var a, Var b, S ca, S cb) {
    const auto& A = val(a);
    const auto& B = val(b);
    if (A.rows() != B.rows() || A.cols() != B.cols()) throw ShapeError("add_scaled: shape mismatch");
    Var v = push(ca * A + cb * B, nullptr);
    nodes_[idx(v)].back = [v, a, b, ca, cb](Tape& t) {
      const auto& g = t.nodes_[t.idx(v)].grad;
      t.nodes_[t.idx(a)].grad += g * ca;
      t.nodes_[t.idx(b)].grad += g * cb;
    };
    return v;
  }

  Var transpose(Var a) {
    Var v = push(val(a).transpose(), nullptr);
    nodes_[idx(v)].back = [v, a](Tape& t) {
      t.nodes_[t.idx(a)].grad += t.nodes_[t.idx(v)].grad.transpose();
    };
    return v;
  }

  Var tanh(Var a) {
    Var v = push(val(a).array().tanh().matrix(), nullptr);
    nodes_[idx(v)].back = [v, a](Tape& t) {
      const auto& y = t.val(v);
      const auto& g = t.nodes_[t.idx(v)].grad;
      t.nodes_[t.idx(a)].grad.array() += g.array() * (S(1) - y.array().square());
    };
    return v;
  }

  Var sigmoid(Var a) {
    Mat<S> out = ((S(1) + (-val(a).array()).exp()).inverse()).matrix();
    Var v = push(std::move(out), nullptr);
    nodes_[idx(v)].back = [v, a](Tape& t) {
      const auto& y = t.val(v);
      const auto& g = t.nodes_[t.idx(v)].grad;
      t.nodes_[t.idx(a)].grad.array() += g.array() * y.array() * (S(1) - y.array());
    };
    return v;
  }

  // Row-wise masked softmax; masked entries are exactly zero.
  Var softmax_rows(Var a, const BoolMask* mask = nullptr) {
    const auto& A = val(a);
    if (mask && (mask->rows != A.rows() || mask->cols != A.cols())) {
      throw ShapeError("softmax_rows: mask shape mismatch");
    }
    Mat<S> out(A.rows(), A.cols());
    for (Eigen::Index r = 0; r < A.rows(); ++r) {
      Eigen::Matrix<S, 1, Eigen::Dynamic> row = A.row(r);
      const std::uint8_t* mrow =
          mask ? mask->data.data() + static_cast<std::size_t>(r * mask->cols) : nullptr;
      out.row(r) = softmax_stable_row<S>(row, mrow);
    }
    BoolMask mask_copy = mask ? *mask : BoolMask{};
    const bool has_mask = mask != nullptr;
    Var v = push(std::move(out), nullptr);
    nodes_[idx(v)].back = [v, a, mask_copy, has_mask](Tape& t) {
      const auto& y = t.val(v);
      const auto& g = t.nodes_[t.idx(v)].grad;
      auto& ga = t.nodes_[t.idx(a)].grad;
      for (Eigen::Index r = 0; r < y.rows(); ++r) {
        S dot = 0;
        for (Eigen::Index c = 0; c < y.cols(); ++c) dot += g(r, c) * y(r, c);
        for (Eigen::Index c = 0; c < y.cols(); ++c) {
          if (has_mask && !mask_copy.at(r, c)) continue;
          ga(r, c) += y(r, c) * (g(r, c) - dot);
        }
      }
    };
    return v;
  }

  Var log_softmax_rows(Var a) {
    const auto& A = val(a);
    Mat<S> out(A.rows(), A.cols());
    for (Eigen::Index r = 0; r < A.rows(); ++r) {
      const S maxv = A.row(r).maxCoeff();
      S sum = 0;
      for (Eigen::Index c = 0; c < A.cols(); ++c) sum += std::exp(A(r, c) - maxv);
      const S lse = maxv + std::log(sum);
      for (Eigen::Index c = 0; c < A.cols(); ++c) out(r, c) = A(r, c) - lse;
    }
    Var v = push(std::move(out), nullptr);
    nodes_[idx(v)].back = [v, a](Tape& t) {
      const auto& y = t.val(v);
      const auto& g = t.nodes_[t.idx(v)].grad;
      auto& ga = t.nodes_[t.idx(a)].grad;
      for (Eigen::Index r = 0; r < y.rows(); ++r) {
        S gsum = 0;
        for (Eigen::Index c = 0; c < y.cols(); ++c) gsum += g(r, c);
        for (Eigen::Index c = 0; c < y.cols(); ++c) {
          ga(r, c) += g(r, c) - std::exp(y(r, c)) * gsum;
        }
      }
    };
    return v;
  }

  Var sum_all(Var a) {
    Mat<S> out(1, 1);
    out(0, 0) = val(a).sum();
    Var v = push(std::move(out), nullptr);
    nodes_[idx(v)].back = [v, a](Tape& t) {
      t.nodes_[t.idx(a)].grad.array() += t.nodes_[t.idx(v)].grad(0, 0);
    };
    return v;
  }

  Var mean_rows(Var a) {
    const auto& A = val(a);
    if (A.rows() < 1) throw ShapeError("mean_rows: empty matrix");
    Mat<S> out = A.colwise().mean();
    Var v = push(std::move(out), nullptr);
    nodes_[idx(v)].back = [v, a](Tape& t) {
      const auto& g = t.nodes_[t.idx(v)].grad;
      auto& ga = t.nodes_[t.idx(a)].grad;
      const S inv = S(1) / static_cast<S>(ga.rows());
      ga.rowwise() += (g.row(0) * inv);
    };
    return v;
  }

  Var pick(Var a, Eigen::Index r, Eigen::Index c) {
    const auto& A = val(a);
    if (r < 0 || r >= A.rows() || c < 0 || c >= A.cols()) throw IndexError("pick: out of range");
    Mat<S> out(1, 1);
    out(0, 0) = A(r, c);
    Var v = push(std::move(out), nullptr);
    nodes_[idx(v)].back = [v, a, r, c](Tape& t) {
      t.nodes_[t.idx(a)].grad(r, c) += t.nodes_[t.idx(v)].grad(0, 0);
    };
    return v;
  }

  // from a 1xD row, select columns -> 1xk
  Var gather_cols(Var a, std::vector<Eigen::Index> ids) {
    const auto& A = val(a);
    if (A.rows() != 1) throw ShapeError("gather_cols: expected a row vector");
    Mat<S> out(1, static_cast<Eigen::Index>(ids.size()));
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0 || ids[i] >= A.cols()) throw IndexError("gather_cols: id out of range");
      out(0, static_cast<Eigen::Index>(i)) = A(0, ids[i]);
    }
    Var v = push(std::move(out), nullptr);
    nodes_[idx(v)].back = [v, a, ids = std::move(ids)](Tape& t) {
      const auto& g = t.nodes_[t.idx(v)].grad;
      auto& ga = t.nodes_[t.idx(a)].grad;
      for (std::size_t i = 0; i < ids.size(); ++i) {
        ga(0, ids[i]) += g(0, static_cast<Eigen::Index>(i));
      }
    };
    return v;
  }

  Var gather_rows(Var a, std::vector<Eigen::Index> ids) {
    const auto& A = val(a);
    Mat<S> out(static_cast<Eigen::Index>(ids.size()), A.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0 || ids[i] >= A.rows()) throw IndexError("gather_rows: id out of range");
      out.row(static_cast<Eigen::Index>(i)) = A.row(ids[i]);
    }
    Var v = push(std::move(out), nullptr);
    nodes_[idx(v)].back = [v, a, ids = std::move(ids)](Tape& t) {
      const auto& g = t.nodes_[t.idx(v)].grad;
      auto& ga = t.nodes_[t.idx(a)].grad;
      for (std::size_t i = 0; i < ids.size(); ++i) {
        ga.row(ids[i]) += g.row(static_cast<Eigen::Index>(i));
      }
    };
    return v;
  }

  // embedding lookup: row `id` of a [D x d] matrix -> 1xd
  Var row(Var a, Eigen::Index id) {
    const auto& A = val(a);
    if (id < 0 || id >= A.rows()) throw IndexError("row: id out of range");
    return gather_rows(a, {id});
  }

  Var slice_rows(Var a, Eigen::Index r0, Eigen::Index n) {
    const auto& A = val(a);
    if (r0 < 0 || n < 0 || r0 + n > A.rows()) throw IndexError("slice_rows: out of range");
    Var v = push(A.middleRows(r0, n), nullptr);
    nodes_[idx(v)].back = [v, a, r0, n](Tape& t) {
      t.nodes_[t.idx(a)].grad.middleRows(r0, n) += t.nodes_[t.idx(v)].grad;
    };
    return v;
  }

  Var concat_rows(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no parts");
    Eigen::Index rows = 0;
    const Eigen::Index cols = val(parts[0]).cols();
    for (Var p : parts) {
      if (val(p).cols() != cols) throw ShapeError("concat_rows: column mismatch");
      rows += val(p).rows();
    }
    Mat<S> out(rows, cols);
    Eigen::Index r = 0;
    for (Var p : parts) {
      out.middleRows(r, val(p).rows()) = val(p);
      r += val(p).rows();
    }
    std::vector<Var> own(parts.begin(), parts.end());
    Var v = push(std::move(out), nullptr);
    nodes_[idx(v)].back = [v, own = std::move(own)](Tape& t) {
      const auto& g = t.nodes_[t.idx(v)].grad;
      Eigen::Index r = 0;
      for (Var p : own) {
        auto& gp = t.nodes_[t.idx(p)].grad;
        gp += g.middleRows(r, gp.rows());
        r += gp.rows();
      }
    };
    return v;
  }

  Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no parts");
    Eigen::Index cols = 0;
    const Eigen::Index rows = val(parts[0]).rows();
    for (Var p : parts) {
      if (val(p).rows() != rows) throw ShapeError("concat_cols: row mismatch");
      cols += val(p).cols();
    }
    Mat<S> out(rows, cols);
    Eigen::Index c = 0;
    for (Var p : parts) {
      out.middleCols(c, val(p).cols()) = val(p);
      c += val(p).cols();
    }
    std::vector<Var> own(parts.begin(), parts.end());
    Var v = push(std::move(out), nullptr);
    nodes_[idx(v)].back = [v, own = std::move(own)](Tape& t) {
      const auto& g = t.nodes_[t.idx(v)].grad;
      Eigen::Index c = 0;
      for (Var p : own) {
        auto& gp = t.nodes_[t.idx(p)].grad;
        gp += g.middleCols(c, gp.cols());
        c += gp.cols();
      }
    };
    return v;
  }

  Var concat_cols(std::initializer_list<Var> parts) {
    return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
  }
  Var concat_rows(std::initializer_list<Var> parts) {
    return concat_rows(std::span<const Var>(parts.begin(), parts.size()));
  }

  void backward(Var root) {
    auto& r = nodes_[check(root)];
    if (r.value.rows() != 1 || r.value.cols() != 1) {
      throw ShapeError("backward: root must be a 1x1 scalar");
    }
    r.grad(0, 0) = S(1);
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      if (nodes_[i].back) nodes_[i].back(*this);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  using Entry = typename ParameterStore<S>::Entry;

  struct Node {
    Mat<S> value;
    Mat<S> grad;
    std::function<void(Tape&)> back;
  };

  std::size_t check(Var v) const {
    if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size()) {
      throw IndexError("invalid tape variable");
    }
    return static_cast<std::size_t>(v.id);
  }
  std::size_t idx(Var v) const { return static_cast<std::size_t>(v.id); }

  Var push(Mat<S> value, std::function<void(Tape&)> back) {
    Node n;
    n.grad = Mat<S>::Zero(value.rows(), value.cols());
    n.value = std::move(value);
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  std::vector<Node> nodes_;
  std::map<const Entry*, Var> param_vars_;
};

// Central-difference gradient check. loss_fn must zero the store's gradients,
// run its forward/backward, and return the loss; the analytic gradient is read
// from the store afterwards. Samples `sample` coordinates (all, when sample
// covers the store). Returns max_i |g_a - g_n| / max(1e-8, |g_a| + |g_n|).
// Disagreements below the finite-difference noise floor (loss roundoff over
// 2*eps) are counted as agreement; central differences cannot resolve
// anything smaller. Structurally dead parameters (e.g. a bias cancelled by a
// downstream row softmax) hit exactly this case.
template <typename S>
double grad_check(const std::function<S(ParameterStore<S>&)>& loss_fn, ParameterStore<S>& params,
                  double eps, std::size_t sample, std::uint64_t seed = 42) {
  if (!(eps > 0)) throw ConfigError("grad_check: eps must be > 0");
  const S base = loss_fn(params);
  if (!std::isfinite(static_cast<double>(base))) {
    throw ValidationError("grad_check: non-finite loss");
  }

  std::vector<Mat<S>> analytic;
  analytic.reserve(params.size());
  for (const auto& e : params.entries()) analytic.push_back(e.grad);

  std::vector<std::pair<std::size_t, Eigen::Index>> coords;
  for (std::size_t p = 0; p < params.size(); ++p) {
    const auto n = params.entries()[p].value.size();
    for (Eigen::Index i = 0; i < n; ++i) coords.emplace_back(p, i);
  }
  if (sample < coords.size()) {
    Rng rng(seed);
    rng.shuffle(coords);
    coords.resize(sample);
  }

  const double noise_floor = 64.0 * std::numeric_limits<double>::epsilon() *
                             std::max(1.0, std::abs(static_cast<double>(base))) / (2.0 * eps);
  double max_rel = 0.0;
  for (const auto& [p, i] : coords) {
    auto& value = params.entries()[p].value;
    const S orig = value.data()[i];
    value.data()[i] = orig + static_cast<S>(eps);
    const double lp = static_cast<double>(loss_fn(params));
    value.data()[i] = orig - static_cast<S>(eps);
    const double lm = static_cast<double>(loss_fn(params));
    value.data()[i] = orig;
    if (!std::isfinite(lp) || !std::isfinite(lm)) {
      throw ValidationError("grad_check: non-finite loss during perturbation");
    }
    const double numeric = (lp - lm) / (2.0 * eps);
    const double exact = static_cast<double>(analytic[p].data()[i]);
    if (std::abs(exact - numeric) <= noise_floor) continue;
    const double rel =
        std::abs(exact - numeric) / std::max(1e-8, std::abs(exact) + std::abs(numeric));
    max_rel = std::max(max_rel, rel);
  }
  // leave the store in the analytic-gradient state
  loss_fn(params);
  return max_rel;
}

// Uniform [-a, a] with a = sqrt(6 / (fan_in + fan_out)); biases get zeros.
template <typename S>
Mat<S> glorot_init(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Mat<S> m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = static_cast<S>(rng.uniform(-a, a));
  }
  return m;
}

}  // namespace orgtrl::ad
