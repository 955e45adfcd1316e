#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "fineray/tensor.hpp"

namespace fineray {

/// Reverse-mode autodiff over a dynamic (define-by-run) tape.
///
/// Every operation appends one node holding its output value; inputs are
/// referenced by node id, so topological order equals creation order and the
/// backward pass is a single reverse sweep. A Tape is single-writer; run one
/// per worker and reduce gradients outside.
template <class Real>
class Tape {
 public:
  using Id = int32_t;

  enum class Op : uint8_t {
    kLeaf,
    kStopGradient,
    kMatmul,
    kAdd,
    kSub,
    kMul,
    kBiasAdd,
    kRelu,
    kSigmoid,
    kExp,
    kLog,
    kSin,
    kCos,
    kAbs,
    kScale,
    kAddConst,
    kSum,
    kMean,
    kSoftmaxRows,
    kMeanRows,
    kScaleRows,
    kConcatCols,
    kConcatRows,
    kSlice,
    kSliceRows,
    kGather,
    kForwardDiffToOne,
    kExclusiveCumsum,
    kLayerNormRows,
    kReshape,
    kTranspose,
    kWeightedBceLogits,
  };

  /// When set, every op output is checked for NaN/Inf and an Error is raised
  /// naming the op. Verification and training both keep this on.
  bool check_finite = true;

  const Tensor<Real>& value(Id id) const { return nodes_[id].value; }

  /// Gradient accumulated by the last backward(); zeros if the node was
  /// unreachable from the loss.
  const Tensor<Real>& grad(Id id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = Tensor<Real>::zeros(n.value.shape);
    return n.grad;
  }

  size_t num_nodes() const { return nodes_.size(); }

  // ---- leaves ----

  Id leaf(Tensor<Real> v) { return push(Op::kLeaf, std::move(v), {}); }
  Id constant(Tensor<Real> v) { return leaf(std::move(v)); }
  Id scalar(Real v) { return leaf(Tensor<Real>::scalar(v)); }

  // ---- primitives ----

  Id stop_gradient(Id x) { return push(Op::kStopGradient, nodes_[x].value, {x}); }

  Id matmul(Id a, Id b) {
    const Tensor<Real>&A = val(a), &B = val(b);
    if (A.rank() != 2 || B.rank() != 2 || A.shape[1] != B.shape[0])
      fail("matmul", {&A, &B});
    Tensor<Real> out = Tensor<Real>::zeros({A.shape[0], B.shape[1]});
    out.mat().noalias() = A.mat() * B.mat();
    return push(Op::kMatmul, std::move(out), {a, b});
  }

  Id add(Id a, Id b) { return ew2("add", Op::kAdd, a, b); }
  Id sub(Id a, Id b) { return ew2("sub", Op::kSub, a, b); }
  Id mul(Id a, Id b) { return ew2("mul", Op::kMul, a, b); }

  /// X (m,n) plus bias b (n) broadcast over rows; the only broadcast allowed.
  Id bias_add(Id x, Id b) {
    const Tensor<Real>&X = val(x), &B = val(b);
    if (B.rank() != 1 || B.shape[0] != X.cols()) fail("bias_add", {&X, &B});
    Tensor<Real> out = X;
    out.mat().rowwise() += B.vec().transpose();
    return push(Op::kBiasAdd, std::move(out), {x, b});
  }

  Id relu(Id x) {
    Tensor<Real> out = val(x);
    for (Real& v : out.data) v = v > Real(0) ? v : Real(0);
    return push(Op::kRelu, std::move(out), {x});
  }
  Id sigmoid(Id x) {
    Tensor<Real> out = val(x);
    for (Real& v : out.data) v = sigmoid_scalar(v);
    return push(Op::kSigmoid, std::move(out), {x});
  }
  Id exp(Id x) {
    Tensor<Real> out = val(x);
    for (Real& v : out.data) v = std::exp(v);
    return push(Op::kExp, std::move(out), {x});
  }
  Id log(Id x) {
    Tensor<Real> out = val(x);
    for (Real& v : out.data) v = std::log(v);
    return push(Op::kLog, std::move(out), {x});
  }
  Id sin(Id x) {
    Tensor<Real> out = val(x);
    for (Real& v : out.data) v = std::sin(v);
    return push(Op::kSin, std::move(out), {x});
  }
  Id cos(Id x) {
    Tensor<Real> out = val(x);
    for (Real& v : out.data) v = std::cos(v);
    return push(Op::kCos, std::move(out), {x});
  }
  Id abs(Id x) {
    Tensor<Real> out = val(x);
    for (Real& v : out.data) v = std::abs(v);
    return push(Op::kAbs, std::move(out), {x});
  }

  Id scale(Id x, Real c) {
    Tensor<Real> out = val(x);
    for (Real& v : out.data) v *= c;
    Id id = push(Op::kScale, std::move(out), {x});
    nodes_[id].aux_r = {c};
    return id;
  }
  Id neg(Id x) { return scale(x, Real(-1)); }
  Id add_const(Id x, Real c) {
    Tensor<Real> out = val(x);
    for (Real& v : out.data) v += c;
    return push(Op::kAddConst, std::move(out), {x});
  }

  // Reductions accumulate in plain element order: Eigen's vectorized redux
  // picks its split by runtime pointer alignment, which breaks bit-exact
  // reproducibility between otherwise identical runs.
  Id sum(Id x) {
    Real s = Real(0);
    for (Real v : val(x).data) s += v;
    return push(Op::kSum, Tensor<Real>::scalar(s), {x});
  }
  Id mean(Id x) {
    Real s = Real(0);
    for (Real v : val(x).data) s += v;
    return push(Op::kMean, Tensor<Real>::scalar(s / Real(val(x).size())), {x});
  }

  /// Softmax over the last axis (each row; a rank-1 input is one row).
  Id softmax(Id x) {
    Tensor<Real> out = val(x);
    int m = out.rows(), n = out.cols();
    for (int r = 0; r < m; ++r) {
      Real* p = out.data.data() + static_cast<int64_t>(r) * n;
      Real mx = p[0];
      for (int c = 1; c < n; ++c) mx = std::max(mx, p[c]);
      Real z = Real(0);
      for (int c = 0; c < n; ++c) {
        p[c] = std::exp(p[c] - mx);
        z += p[c];
      }
      for (int c = 0; c < n; ++c) p[c] /= z;
    }
    return push(Op::kSoftmaxRows, std::move(out), {x});
  }

  /// Average over the first axis of a (m,n) matrix -> (n).
  Id mean_rows(Id x) {
    const Tensor<Real>& X = val(x);
    if (X.rank() != 2) fail("mean_rows", {&X});
    int m = X.shape[0], n = X.shape[1];
    Tensor<Real> out = Tensor<Real>::zeros({n});
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < n; ++c) out.data[c] += X.at(r, c);
    for (Real& v : out.data) v /= Real(m);
    return push(Op::kMeanRows, std::move(out), {x});
  }

  /// Row-wise scaling: Y = diag(s) * X with s (m), X (m,n).
  Id scale_rows(Id x, Id s) {
    const Tensor<Real>&X = val(x), &S = val(s);
    if (X.rank() != 2 || S.rank() != 1 || S.shape[0] != X.shape[0]) fail("scale_rows", {&X, &S});
    Tensor<Real> out = X;
    out.mat().array().colwise() *= S.vec().array();
    return push(Op::kScaleRows, std::move(out), {x, s});
  }

  Id concat_cols(const std::vector<Id>& parts) {
    if (parts.empty()) throw Error("concat_cols: no inputs");
    int m = val(parts[0]).rows(), total = 0;
    for (Id p : parts) {
      const Tensor<Real>& T = val(p);
      if (T.rank() != 2 || T.shape[0] != m) fail("concat_cols", {&T});
      total += T.shape[1];
    }
    Tensor<Real> out = Tensor<Real>::zeros({m, total});
    int off = 0;
    for (Id p : parts) {
      const Tensor<Real>& T = val(p);
      out.mat().middleCols(off, T.shape[1]) = T.mat();
      off += T.shape[1];
    }
    return push(Op::kConcatCols, std::move(out), parts);
  }

  /// Concatenate along axis 0. Rank-1 inputs concatenate end to end.
  Id concat(const std::vector<Id>& parts) {
    if (parts.empty()) throw Error("concat: no inputs");
    int rank = val(parts[0]).rank();
    if (rank == 1) {
      int total = 0;
      for (Id p : parts) {
        if (val(p).rank() != 1) fail("concat", {&val(p)});
        total += val(p).shape[0];
      }
      Tensor<Real> out = Tensor<Real>::zeros({total});
      int off = 0;
      for (Id p : parts) {
        const Tensor<Real>& T = val(p);
        std::copy(T.data.begin(), T.data.end(), out.data.begin() + off);
        off += T.shape[0];
      }
      return push(Op::kConcatRows, std::move(out), parts);
    }
    int n = val(parts[0]).shape[1], rows = 0;
    for (Id p : parts) {
      const Tensor<Real>& T = val(p);
      if (T.rank() != 2 || T.shape[1] != n) fail("concat", {&T});
      rows += T.shape[0];
    }
    Tensor<Real> out = Tensor<Real>::zeros({rows, n});
    int off = 0;
    for (Id p : parts) {
      const Tensor<Real>& T = val(p);
      out.mat().middleRows(off, T.shape[0]) = T.mat();
      off += T.shape[0];
    }
    return push(Op::kConcatRows, std::move(out), parts);
  }

  /// Rank-1 slice [begin, end).
  Id slice(Id x, int begin, int end) {
    const Tensor<Real>& X = val(x);
    if (X.rank() != 1 || begin < 0 || end > X.shape[0] || begin > end) fail("slice", {&X});
    Tensor<Real> out({end - begin},
                     std::vector<Real>(X.data.begin() + begin, X.data.begin() + end));
    Id id = push(Op::kSlice, std::move(out), {x});
    nodes_[id].aux_i = {begin, end};
    return id;
  }

  /// Row slice [begin, end) of a (m,n) matrix.
  Id slice_rows(Id x, int begin, int end) {
    const Tensor<Real>& X = val(x);
    if (X.rank() != 2 || begin < 0 || end > X.shape[0] || begin > end) fail("slice_rows", {&X});
    Tensor<Real> out = Tensor<Real>::zeros({end - begin, X.shape[1]});
    out.mat() = X.mat().middleRows(begin, end - begin);
    Id id = push(Op::kSliceRows, std::move(out), {x});
    nodes_[id].aux_i = {begin, end};
    return id;
  }

  /// y[i] = x[idx[i]] on a rank-1 tensor; backward scatter-adds.
  Id gather(Id x, std::vector<int> idx) {
    const Tensor<Real>& X = val(x);
    if (X.rank() != 1) fail("gather", {&X});
    Tensor<Real> out = Tensor<Real>::zeros({static_cast<int>(idx.size())});
    for (size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] < 0 || idx[i] >= X.shape[0]) throw Error("gather: index out of range");
      out.data[i] = X.data[idx[i]];
    }
    Id id = push(Op::kGather, std::move(out), {x});
    nodes_[id].aux_i = std::move(idx);
    return id;
  }

  /// Interval lengths of a sorted rank-1 t in [0,1]:
  /// d[i] = t[i+1]-t[i] for i < n-1, d[n-1] = 1 - t[n-1].
  Id forward_diff_to_one(Id x) {
    const Tensor<Real>& X = val(x);
    if (X.rank() != 1 || X.shape[0] < 1) fail("forward_diff_to_one", {&X});
    int n = X.shape[0];
    Tensor<Real> out = Tensor<Real>::zeros({n});
    for (int i = 0; i + 1 < n; ++i) out.data[i] = X.data[i + 1] - X.data[i];
    out.data[n - 1] = Real(1) - X.data[n - 1];
    return push(Op::kForwardDiffToOne, std::move(out), {x});
  }

  /// y[i] = sum_{j<i} x[j] on a rank-1 tensor (y[0] = 0).
  Id exclusive_cumsum(Id x) {
    const Tensor<Real>& X = val(x);
    if (X.rank() != 1) fail("exclusive_cumsum", {&X});
    int n = X.shape[0];
    Tensor<Real> out = Tensor<Real>::zeros({n});
    Real acc = Real(0);
    for (int i = 0; i < n; ++i) {
      out.data[i] = acc;
      acc += X.data[i];
    }
    return push(Op::kExclusiveCumsum, std::move(out), {x});
  }

  /// Per-row standardization with learned scale/shift:
  /// y = (x - mean_row) / sqrt(var_row + eps) * gamma + beta.
  Id layer_norm(Id x, Id gamma, Id beta, Real eps = Real(1e-5)) {
    const Tensor<Real>&X = val(x), &G = val(gamma), &B = val(beta);
    if (X.rank() != 2 || G.rank() != 1 || B.rank() != 1 || G.shape[0] != X.shape[1] ||
        B.shape[0] != X.shape[1])
      fail("layer_norm", {&X, &G, &B});
    int m = X.shape[0], n = X.shape[1];
    Tensor<Real> out = Tensor<Real>::zeros({m, n});
    Tensor<Real> inv_std = Tensor<Real>::zeros({m});
    for (int r = 0; r < m; ++r) {
      const Real* p = X.data.data() + static_cast<int64_t>(r) * n;
      Real mu = Real(0);
      for (int c = 0; c < n; ++c) mu += p[c];
      mu /= n;
      Real var = Real(0);
      for (int c = 0; c < n; ++c) var += (p[c] - mu) * (p[c] - mu);
      var /= n;
      Real is = Real(1) / std::sqrt(var + eps);
      inv_std.data[r] = is;
      Real* q = out.data.data() + static_cast<int64_t>(r) * n;
      for (int c = 0; c < n; ++c) q[c] = (p[c] - mu) * is * G.data[c] + B.data[c];
    }
    Id id = push(Op::kLayerNormRows, std::move(out), {x, gamma, beta});
    nodes_[id].saved = std::move(inv_std);
    return id;
  }

  Id reshape(Id x, std::vector<int> shape) {
    const Tensor<Real>& X = val(x);
    if (Tensor<Real>::numel_of(shape) != X.size())
      throw Error("reshape: size mismatch " + detail::shape_str(X.shape) + " -> " +
                  detail::shape_str(shape));
    Tensor<Real> out(std::move(shape), X.data);
    return push(Op::kReshape, std::move(out), {x});
  }

  Id transpose(Id x) {
    const Tensor<Real>& X = val(x);
    if (X.rank() != 2) fail("transpose", {&X});
    Tensor<Real> out = Tensor<Real>::zeros({X.shape[1], X.shape[0]});
    out.mat() = X.mat().transpose();
    return push(Op::kTranspose, std::move(out), {x});
  }

  /// Numerically stable weighted binary cross-entropy from logits:
  /// loss = sum_i weight[i] * (max(z,0) - z*y + log(1+exp(-|z|))).
  /// Gradient flows into the logits only.
  Id weighted_bce_logits(Id logits, Id labels, Id weights) {
    const Tensor<Real>&Z = val(logits), &Y = val(labels), &W = val(weights);
    if (!Z.same_shape(Y) || !Z.same_shape(W)) fail("weighted_bce_logits", {&Z, &Y, &W});
    Real loss = Real(0);
    for (int64_t i = 0; i < Z.size(); ++i) {
      Real z = Z.data[i];
      loss += W.data[i] * (std::max(z, Real(0)) - z * Y.data[i] +
                           std::log1p(std::exp(-std::abs(z))));
    }
    return push(Op::kWeightedBceLogits, Tensor<Real>::scalar(loss), {logits, labels, weights});
  }

  // ---- composites ----

  Id mse(Id a, Id b) {
    Id d = sub(a, b);
    return mean(mul(d, d));
  }

  /// Fully connected layer y = x W + b.
  Id linear(Id x, Id w, Id b) { return bias_add(matmul(x, w), b); }

  // ---- backward ----

  /// Reverse sweep from a scalar loss node; gradients accumulate in exact
  /// reverse creation order.
  void backward(Id loss) {
    Node& ln = nodes_[loss];
    if (!ln.value.is_scalar())
      throw Error("backward: loss must be scalar, got shape " +
                  detail::shape_str(ln.value.shape));
    ensure_grad(loss);
    ln.grad.data[0] = Real(1);
    for (Id id = loss; id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.grad.size() == 0) continue;  // not reached from the loss
      backward_node(id, n);
    }
  }

  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Tensor<Real> value;
    Tensor<Real> grad;           // lazily allocated
    Op op = Op::kLeaf;
    std::vector<Id> inputs;
    std::vector<int> aux_i;
    std::vector<Real> aux_r;
    Tensor<Real> saved;          // op-specific forward byproduct
  };

  std::vector<Node> nodes_;

  static Real sigmoid_scalar(Real x) {
    if (x >= Real(0)) return Real(1) / (Real(1) + std::exp(-x));
    Real e = std::exp(x);
    return e / (Real(1) + e);
  }

  const Tensor<Real>& val(Id id) const { return nodes_[id].value; }

  [[noreturn]] void fail(const char* op, std::initializer_list<const Tensor<Real>*> ts) const {
    std::string msg = std::string(op) + ": incompatible shapes";
    for (const Tensor<Real>* t : ts) msg += " " + detail::shape_str(t->shape);
    throw Error(msg);
  }

  Id push(Op op, Tensor<Real> value, std::vector<Id> inputs) {
    if (check_finite && !value.all_finite())
      throw NumericalError(std::string("non-finite value produced by op ") + op_name(op));
    Node n;
    n.value = std::move(value);
    n.op = op;
    n.inputs = std::move(inputs);
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
  }

  Id ew2(const char* name, Op op, Id a, Id b) {
    const Tensor<Real>&A = val(a), &B = val(b);
    if (!A.same_shape(B)) fail(name, {&A, &B});
    Tensor<Real> out = A;
    switch (op) {
      case Op::kAdd: out.vec() += B.vec(); break;
      case Op::kSub: out.vec() -= B.vec(); break;
      case Op::kMul: out.vec().array() *= B.vec().array(); break;
      default: throw Error("ew2: bad op");
    }
    return push(op, std::move(out), {a, b});
  }

  Tensor<Real>& ensure_grad(Id id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = Tensor<Real>::zeros(n.value.shape);
    return n.grad;
  }

  static const char* op_name(Op op) {
    switch (op) {
      case Op::kLeaf: return "leaf";
      case Op::kStopGradient: return "stop_gradient";
      case Op::kMatmul: return "matmul";
      case Op::kAdd: return "add";
      case Op::kSub: return "sub";
      case Op::kMul: return "mul";
      case Op::kBiasAdd: return "bias_add";
      case Op::kRelu: return "relu";
      case Op::kSigmoid: return "sigmoid";
      case Op::kExp: return "exp";
      case Op::kLog: return "log";
      case Op::kSin: return "sin";
      case Op::kCos: return "cos";
      case Op::kAbs: return "abs";
      case Op::kScale: return "scale";
      case Op::kAddConst: return "add_const";
      case Op::kSum: return "sum";
      case Op::kMean: return "mean";
      case Op::kSoftmaxRows: return "softmax";
      case Op::kMeanRows: return "mean_rows";
      case Op::kScaleRows: return "scale_rows";
      case Op::kConcatCols: return "concat_cols";
      case Op::kConcatRows: return "concat";
      case Op::kSlice: return "slice";
      case Op::kSliceRows: return "slice_rows";
      case Op::kGather: return "gather";
      case Op::kForwardDiffToOne: return "forward_diff_to_one";
      case Op::kExclusiveCumsum: return "exclusive_cumsum";
      case Op::kLayerNormRows: return "layer_norm";
      case Op::kReshape: return "reshape";
      case Op::kTranspose: return "transpose";
      case Op::kWeightedBceLogits: return "weighted_bce_logits";
    }
    return "?";
  }

  void backward_node(Id id, Node& n) {
    const Tensor<Real>& g = n.grad;
    switch (n.op) {
      case Op::kLeaf:
      case Op::kStopGradient:
        break;  // stop_gradient: contributes nothing to its input
      case Op::kMatmul: {
        const Tensor<Real>&A = val(n.inputs[0]), &B = val(n.inputs[1]);
        ensure_grad(n.inputs[0]).mat().noalias() += g.mat() * B.mat().transpose();
        ensure_grad(n.inputs[1]).mat().noalias() += A.mat().transpose() * g.mat();
        break;
      }
      case Op::kAdd:
        ensure_grad(n.inputs[0]).vec() += g.vec();
        ensure_grad(n.inputs[1]).vec() += g.vec();
        break;
      case Op::kSub:
        ensure_grad(n.inputs[0]).vec() += g.vec();
        ensure_grad(n.inputs[1]).vec() -= g.vec();
        break;
      case Op::kMul:
        ensure_grad(n.inputs[0]).vec().array() += g.vec().array() * val(n.inputs[1]).vec().array();
        ensure_grad(n.inputs[1]).vec().array() += g.vec().array() * val(n.inputs[0]).vec().array();
        break;
      case Op::kBiasAdd: {
        ensure_grad(n.inputs[0]).vec() += g.vec();
        Tensor<Real>& gb = ensure_grad(n.inputs[1]);
        int m = g.rows(), c = g.cols();
        for (int r = 0; r < m; ++r)
          for (int j = 0; j < c; ++j) gb.data[j] += g.at(r, j);
        break;
      }
      case Op::kRelu: {
        const Tensor<Real>& x = val(n.inputs[0]);
        Tensor<Real>& gx = ensure_grad(n.inputs[0]);
        for (int64_t i = 0; i < x.size(); ++i)
          if (x.data[i] > Real(0)) gx.data[i] += g.data[i];
        break;
      }
      case Op::kSigmoid: {
        Tensor<Real>& gx = ensure_grad(n.inputs[0]);
        const Tensor<Real>& y = n.value;
        for (int64_t i = 0; i < y.size(); ++i)
          gx.data[i] += g.data[i] * y.data[i] * (Real(1) - y.data[i]);
        break;
      }
      case Op::kExp:
        ensure_grad(n.inputs[0]).vec().array() += g.vec().array() * n.value.vec().array();
        break;
      case Op::kLog:
        ensure_grad(n.inputs[0]).vec().array() +=
            g.vec().array() / val(n.inputs[0]).vec().array();
        break;
      case Op::kSin: {
        Tensor<Real>& gx = ensure_grad(n.inputs[0]);
        const Tensor<Real>& x = val(n.inputs[0]);
        for (int64_t i = 0; i < x.size(); ++i) gx.data[i] += g.data[i] * std::cos(x.data[i]);
        break;
      }
      case Op::kCos: {
        Tensor<Real>& gx = ensure_grad(n.inputs[0]);
        const Tensor<Real>& x = val(n.inputs[0]);
        for (int64_t i = 0; i < x.size(); ++i) gx.data[i] -= g.data[i] * std::sin(x.data[i]);
        break;
      }
      case Op::kAbs: {
        Tensor<Real>& gx = ensure_grad(n.inputs[0]);
        const Tensor<Real>& x = val(n.inputs[0]);
        for (int64_t i = 0; i < x.size(); ++i)
          gx.data[i] += x.data[i] >= Real(0) ? g.data[i] : -g.data[i];
        break;
      }
      case Op::kScale:
        ensure_grad(n.inputs[0]).vec() += n.aux_r[0] * g.vec();
        break;
      case Op::kAddConst:
        ensure_grad(n.inputs[0]).vec() += g.vec();
        break;
      case Op::kSum:
        ensure_grad(n.inputs[0]).vec().array() += g.data[0];
        break;
      case Op::kMean:
        ensure_grad(n.inputs[0]).vec().array() += g.data[0] / Real(val(n.inputs[0]).size());
        break;
      case Op::kSoftmaxRows: {
        const Tensor<Real>& y = n.value;
        Tensor<Real>& gx = ensure_grad(n.inputs[0]);
        int m = y.rows(), c = y.cols();
        for (int r = 0; r < m; ++r) {
          const Real* yp = y.data.data() + static_cast<int64_t>(r) * c;
          const Real* gp = g.data.data() + static_cast<int64_t>(r) * c;
          Real dot = Real(0);
          for (int j = 0; j < c; ++j) dot += yp[j] * gp[j];
          Real* o = gx.data.data() + static_cast<int64_t>(r) * c;
          for (int j = 0; j < c; ++j) o[j] += yp[j] * (gp[j] - dot);
        }
        break;
      }
      case Op::kMeanRows: {
        Tensor<Real>& gx = ensure_grad(n.inputs[0]);
        int m = gx.rows();
        gx.mat().rowwise() += (g.vec() / Real(m)).transpose();
        break;
      }
      case Op::kScaleRows: {
        const Tensor<Real>&X = val(n.inputs[0]), &S = val(n.inputs[1]);
        Tensor<Real>& gx = ensure_grad(n.inputs[0]);
        Tensor<Real>& gs = ensure_grad(n.inputs[1]);
        int m = X.shape[0], c = X.shape[1];
        for (int r = 0; r < m; ++r) {
          Real dot = Real(0);
          for (int j = 0; j < c; ++j) {
            gx.at(r, j) += g.at(r, j) * S.data[r];
            dot += g.at(r, j) * X.at(r, j);
          }
          gs.data[r] += dot;
        }
        break;
      }
      case Op::kConcatCols: {
        int off = 0;
        for (Id in : n.inputs) {
          int w = val(in).shape[1];
          ensure_grad(in).mat() += g.mat().middleCols(off, w);
          off += w;
        }
        break;
      }
      case Op::kConcatRows: {
        if (n.value.rank() == 1) {
          int off = 0;
          for (Id in : n.inputs) {
            int w = val(in).shape[0];
            Tensor<Real>& gi = ensure_grad(in);
            for (int i = 0; i < w; ++i) gi.data[i] += g.data[off + i];
            off += w;
          }
        } else {
          int off = 0;
          for (Id in : n.inputs) {
            int r = val(in).shape[0];
            ensure_grad(in).mat() += g.mat().middleRows(off, r);
            off += r;
          }
        }
        break;
      }
      case Op::kSlice: {
        Tensor<Real>& gx = ensure_grad(n.inputs[0]);
        int begin = n.aux_i[0];
        for (int64_t i = 0; i < g.size(); ++i) gx.data[begin + i] += g.data[i];
        break;
      }
      case Op::kSliceRows: {
        Tensor<Real>& gx = ensure_grad(n.inputs[0]);
        int begin = n.aux_i[0], count = n.aux_i[1] - n.aux_i[0];
        gx.mat().middleRows(begin, count) += g.mat();
        break;
      }
      case Op::kGather: {
        Tensor<Real>& gx = ensure_grad(n.inputs[0]);
        for (size_t i = 0; i < n.aux_i.size(); ++i) gx.data[n.aux_i[i]] += g.data[i];
        break;
      }
      case Op::kForwardDiffToOne: {
        Tensor<Real>& gx = ensure_grad(n.inputs[0]);
        int len = static_cast<int>(gx.size());
        for (int i = 0; i < len; ++i) {
          gx.data[i] -= g.data[i];
          if (i > 0) gx.data[i] += g.data[i - 1];
        }
        break;
      }
      case Op::kExclusiveCumsum: {
        Tensor<Real>& gx = ensure_grad(n.inputs[0]);
        int len = static_cast<int>(gx.size());
        Real acc = Real(0);
        for (int i = len - 1; i >= 0; --i) {
          gx.data[i] += acc;
          acc += g.data[i];
        }
        break;
      }
      case Op::kLayerNormRows: {
        const Tensor<Real>&X = val(n.inputs[0]), &G = val(n.inputs[1]);
        Tensor<Real>& gx = ensure_grad(n.inputs[0]);
        Tensor<Real>& gg = ensure_grad(n.inputs[1]);
        Tensor<Real>& gb = ensure_grad(n.inputs[2]);
        int m = X.shape[0], c = X.shape[1];
        for (int r = 0; r < m; ++r) {
          const Real* xp = X.data.data() + static_cast<int64_t>(r) * c;
          const Real* gp = g.data.data() + static_cast<int64_t>(r) * c;
          Real is = n.saved.data[r];
          Real mu = Real(0);
          for (int j = 0; j < c; ++j) mu += xp[j];
          mu /= c;
          // dxhat, and its row means needed for the chain through mu/var
          Real mean_dxh = Real(0), mean_dxh_xh = Real(0);
          for (int j = 0; j < c; ++j) {
            Real xh = (xp[j] - mu) * is;
            Real dxh = gp[j] * G.data[j];
            mean_dxh += dxh;
            mean_dxh_xh += dxh * xh;
            gg.data[j] += gp[j] * xh;
            gb.data[j] += gp[j];
          }
          mean_dxh /= c;
          mean_dxh_xh /= c;
          Real* o = gx.data.data() + static_cast<int64_t>(r) * c;
          for (int j = 0; j < c; ++j) {
            Real xh = (xp[j] - mu) * is;
            Real dxh = gp[j] * G.data[j];
            o[j] += is * (dxh - mean_dxh - xh * mean_dxh_xh);
          }
        }
        break;
      }
      case Op::kReshape: {
        Tensor<Real>& gx = ensure_grad(n.inputs[0]);
        gx.vec() += g.vec();
        break;
      }
      case Op::kTranspose:
        ensure_grad(n.inputs[0]).mat() += g.mat().transpose();
        break;
      case Op::kWeightedBceLogits: {
        const Tensor<Real>&Z = val(n.inputs[0]), &Y = val(n.inputs[1]), &W = val(n.inputs[2]);
        Tensor<Real>& gz = ensure_grad(n.inputs[0]);
        Real gl = g.data[0];
        for (int64_t i = 0; i < Z.size(); ++i)
          gz.data[i] += gl * W.data[i] * (sigmoid_scalar(Z.data[i]) - Y.data[i]);
        break;
      }
    }
    (void)id;
  }
};

}  // namespace fineray
