// Copyright Contributors to the PointCMT Project
// SPDX-License-Identifier: Apache-2.0
//
// Minimal reverse-mode layer zoo: every primitive is an explicit
// forward/backward pair over NumArrays, parameters live in a ParamStore,
// and a finite-difference checker audits any composite built from them.
// There is no general tape; the call sites spell out their own backward
// order, which keeps the gradient contracts auditable.

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cmt/numarray.hpp"
#include "cmt/rng.hpp"

namespace cmt::diff {

// ---------------------------------------------------------------------------
// Parameter storage

// Named (value, grad) pairs in insertion order. Optimizer state is kept in
// the same table under the reserved "opt." prefix and is skipped by
// checkpointing and by the update loops' parameter walk.
class ParamStore {
public:
    NumArray& add(const std::string& name, NumArray value);
    bool has(const std::string& name) const;
    NumArray& value(const std::string& name);
    const NumArray& value(const std::string& name) const;
    NumArray& grad(const std::string& name);
    const NumArray& grad(const std::string& name) const;
    const std::vector<std::string>& names() const { return order_; }

    // Parameter names only (reserved optimizer entries filtered out).
    std::vector<std::string> param_names() const;

    void zero_grads();
    void freeze() { frozen_ = true; }
    bool frozen() const { return frozen_; }

    static bool is_reserved(const std::string& name) { return name.rfind("opt.", 0) == 0; }

private:
    struct Entry {
        NumArray value;
        NumArray grad;
    };
    std::vector<std::string> order_;
    std::vector<Entry> entries_;
    bool frozen_ = false;
    std::size_t index_of(const std::string& name) const;  // throws if absent
};

// Fan-in scaled uniform init, +-sqrt(6/fan_in).
NumArray uniform_fanin_init(std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng);

// ---------------------------------------------------------------------------
// Layer description (used by networks to validate width chains)

struct LayerSpec {
    enum class Kind { Linear, Relu, SetMaxPool, SoftmaxXent, LogSoftmax };
    Kind kind;
    std::vector<std::size_t> dims;  // Linear: {din, dout}; SetMaxPool: {set_size}; others: {}

    void validate() const;
};

// ---------------------------------------------------------------------------
// Primitives. x is [B x din] unless noted; backward routines return dx and
// accumulate parameter gradients into the provided slots.

NumArray linear_forward(const NumArray& x, const NumArray& w, const NumArray& b);
NumArray linear_backward(const NumArray& x, const NumArray& w, const NumArray& dy,
                         NumArray& dw_acc, NumArray& db_acc);

NumArray relu_forward(const NumArray& x);
NumArray relu_backward(const NumArray& x, const NumArray& dy);  // subgradient 0 at x == 0

struct SetMaxPool {
    NumArray pooled;          // [B x d]
    std::vector<int> argmax;  // [B x d], winning set index, lowest on ties
    std::size_t set_size = 0;
};
SetMaxPool set_max_pool_forward(const NumArray& x);  // x: [B x N x d]
NumArray set_max_pool_backward(const SetMaxPool& pool, const NumArray& dy);

struct LossGrad {
    double value = 0.0;
    NumArray dlogits;
};
// Mean cross-entropy over the batch with max-shifted log-softmax.
LossGrad softmax_xent(const NumArray& logits, const std::vector<int>& labels);

NumArray log_softmax(const NumArray& x);

// D_KL(softmax(p/T) || softmax(q/T)) averaged over the batch. Gradient flows
// to q only; p is treated as a constant (the teacher side).
LossGrad kl_divergence(const NumArray& p_logits, const NumArray& q_logits, double temperature = 1.0);

struct KlFull {
    double value = 0.0;
    NumArray dp_logits;
    NumArray dq_logits;
};
// Same loss but with the gradient to both logit sets; used where the
// teacher-side input is itself a trainable function.
KlFull kl_divergence_full(const NumArray& p_logits, const NumArray& q_logits, double temperature = 1.0);

// ---------------------------------------------------------------------------
// Optimizers. Both walk parameters in insertion order, raise DivergenceError
// on a non-finite gradient (naming the parameter), and zero grads afterwards.

void sgd_step(ParamStore& ps, double lr, double momentum);
void adam_step(ParamStore& ps, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

// ---------------------------------------------------------------------------
// Finite-difference gradient checking

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    bool passed = false;
};

// `loss_and_grad` must zero nothing itself: the checker zeroes grads, calls
// it once to harvest analytic gradients, then probes sampled coordinates
// (up to 200 per tensor) with central differences of the same closure.
GradCheckReport grad_check(const std::function<double()>& loss_and_grad, ParamStore& ps,
                           double h, double tolerance);

}  // namespace cmt::diff
