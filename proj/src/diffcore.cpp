// Copyright Contributors to the PointCMT Project
// SPDX-License-Identifier: Apache-2.0

#include "cmt/diffcore.hpp"

#include <algorithm>
#include <cmath>

namespace cmt::diff {

namespace {

// Plain row-major matmul kernels. Loop orders are chosen so the inner loop
// streams contiguously; at desk scale this is all the BLAS we need.

// C[m x n] (+)= A[m x k] * B[k x n]
void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            const double* brow = b + kk * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[k x n] += A^T[m x k] * B[m x n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t row = 0; row < m; ++row) {
        const double* arow = a + row * k;
        const double* brow = b + row * n;
        for (std::size_t i = 0; i < k; ++i) {
            const double av = arow[i];
            double* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m x k] += A[m x n] * B^T[k x n]. B is transposed into scratch first so
// the inner loop streams like gemm instead of reducing dot products.
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k) {
    std::vector<double> bt(n * k);
    for (std::size_t q = 0; q < k; ++q)
        for (std::size_t j = 0; j < n; ++j) bt[j * k + q] = b[q * n + j];
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * n;
        double* crow = c + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const double av = arow[j];
            const double* btrow = bt.data() + j * k;
            for (std::size_t q = 0; q < k; ++q) crow[q] += av * btrow[q];
        }
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// ParamStore

std::size_t ParamStore::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < order_.size(); ++i)
        if (order_[i] == name) return i;
    throw InvalidArgument("ParamStore: unknown entry '" + name + "'");
}

NumArray& ParamStore::add(const std::string& name, NumArray value) {
    for (const std::string& n : order_)
        if (n == name) throw InvalidArgument("ParamStore: duplicate entry '" + name + "'");
    order_.push_back(name);
    NumArray grad = NumArray::zeros(value.shape);
    entries_.push_back(Entry{std::move(value), std::move(grad)});
    return entries_.back().value;
}

bool ParamStore::has(const std::string& name) const {
    for (const std::string& n : order_)
        if (n == name) return true;
    return false;
}

NumArray& ParamStore::value(const std::string& name) { return entries_[index_of(name)].value; }
const NumArray& ParamStore::value(const std::string& name) const { return entries_[index_of(name)].value; }
NumArray& ParamStore::grad(const std::string& name) { return entries_[index_of(name)].grad; }
const NumArray& ParamStore::grad(const std::string& name) const { return entries_[index_of(name)].grad; }

std::vector<std::string> ParamStore::param_names() const {
    std::vector<std::string> out;
    for (const std::string& n : order_)
        if (!is_reserved(n)) out.push_back(n);
    return out;
}

void ParamStore::zero_grads() {
    for (Entry& e : entries_) e.grad.fill(0.0);
}

NumArray uniform_fanin_init(std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng) {
    NumArray out = NumArray::zeros(std::move(shape));
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (double& v : out.data) v = rng.uniform(-bound, bound);
    return out;
}

void LayerSpec::validate() const {
    switch (kind) {
        case Kind::Linear:
            if (dims.size() != 2 || dims[0] == 0 || dims[1] == 0)
                throw InvalidArgument("LayerSpec: linear needs positive {din, dout}");
            break;
        case Kind::SetMaxPool:
            if (dims.size() != 1 || dims[0] == 0)
                throw InvalidArgument("LayerSpec: set_max_pool needs positive {set_size}");
            break;
        default:
            if (!dims.empty()) throw InvalidArgument("LayerSpec: kind takes no dims");
    }
}

// ---------------------------------------------------------------------------
// Linear

NumArray linear_forward(const NumArray& x, const NumArray& w, const NumArray& b) {
    if (x.rank() != 2 || w.rank() != 2 || b.rank() != 1)
        throw ShapeError("linear_forward: expected x[BxDin], w[DinxDout], b[Dout]");
    const std::size_t B = x.dim(0), din = x.dim(1), dout = w.dim(1);
    if (w.dim(0) != din || b.dim(0) != dout)
        throw ShapeError("linear_forward: inconsistent dims x" + x.shape_str() + " w" + w.shape_str());
    NumArray y = NumArray::zeros({B, dout});
    for (std::size_t i = 0; i < B; ++i)
        std::copy(b.data.begin(), b.data.end(), y.data.begin() + i * dout);
    gemm(x.data.data(), w.data.data(), y.data.data(), B, din, dout);
    return y;
}

NumArray linear_backward(const NumArray& x, const NumArray& w, const NumArray& dy,
                         NumArray& dw_acc, NumArray& db_acc) {
    const std::size_t B = x.dim(0), din = x.dim(1), dout = w.dim(1);
    if (dy.rank() != 2 || dy.dim(0) != B || dy.dim(1) != dout)
        throw ShapeError("linear_backward: dy" + dy.shape_str() + " does not match y[Bx" +
                         std::to_string(dout) + "]");
    require_shape(dw_acc, w, "linear_backward dw");
    gemm_tn(x.data.data(), dy.data.data(), dw_acc.data.data(), B, din, dout);
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t j = 0; j < dout; ++j) db_acc.data[j] += dy.at(i, j);
    NumArray dx = NumArray::zeros({B, din});
    gemm_nt(dy.data.data(), w.data.data(), dx.data.data(), B, dout, din);
    return dx;
}

// ---------------------------------------------------------------------------
// ReLU

NumArray relu_forward(const NumArray& x) {
    NumArray y = x;
    for (double& v : y.data)
        if (v < 0.0) v = 0.0;
    return y;
}

NumArray relu_backward(const NumArray& x, const NumArray& dy) {
    require_shape(x, dy, "relu_backward");
    NumArray dx = NumArray::zeros(x.shape);
    for (std::size_t i = 0; i < x.numel(); ++i) dx.data[i] = x.data[i] > 0.0 ? dy.data[i] : 0.0;
    return dx;
}

// ---------------------------------------------------------------------------
// Set max pool

SetMaxPool set_max_pool_forward(const NumArray& x) {
    if (x.rank() != 3) throw ShapeError("set_max_pool_forward: expected x[BxNxd]");
    const std::size_t B = x.dim(0), N = x.dim(1), d = x.dim(2);
    if (N == 0) throw InvalidArgument("set_max_pool_forward: empty set");
    SetMaxPool out;
    out.set_size = N;
    out.pooled = NumArray::zeros({B, d});
    out.argmax.assign(B * d, 0);
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t j = 0; j < d; ++j) {
            double best = x.at(b, 0, j);
            int best_n = 0;
            for (std::size_t n = 1; n < N; ++n) {
                const double v = x.at(b, n, j);
                if (v > best) {  // strict: ties stay with the lowest index
                    best = v;
                    best_n = static_cast<int>(n);
                }
            }
            out.pooled.at(b, j) = best;
            out.argmax[b * d + j] = best_n;
        }
    }
    return out;
}

NumArray set_max_pool_backward(const SetMaxPool& pool, const NumArray& dy) {
    require_shape(pool.pooled, dy, "set_max_pool_backward");
    const std::size_t B = dy.dim(0), d = dy.dim(1), N = pool.set_size;
    NumArray dx = NumArray::zeros({B, N, d});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t j = 0; j < d; ++j)
            dx.at(b, static_cast<std::size_t>(pool.argmax[b * d + j]), j) = dy.at(b, j);
    return dx;
}

// ---------------------------------------------------------------------------
// Losses

NumArray log_softmax(const NumArray& x) {
    if (x.rank() != 2) throw ShapeError("log_softmax: expected [BxC]");
    const std::size_t B = x.dim(0), C = x.dim(1);
    NumArray out = NumArray::zeros({B, C});
    for (std::size_t b = 0; b < B; ++b) {
        double mx = x.at(b, 0);
        for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, x.at(b, c));
        double sum = 0.0;
        for (std::size_t c = 0; c < C; ++c) sum += std::exp(x.at(b, c) - mx);
        const double lse = mx + std::log(sum);
        for (std::size_t c = 0; c < C; ++c) out.at(b, c) = x.at(b, c) - lse;
    }
    return out;
}

LossGrad softmax_xent(const NumArray& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2) throw ShapeError("softmax_xent: expected logits[BxC]");
    const std::size_t B = logits.dim(0), C = logits.dim(1);
    if (labels.size() != B) throw ShapeError("softmax_xent: batch size mismatch with labels");
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= C)
            throw InvalidArgument("softmax_xent: label " + std::to_string(y) + " out of range [0," +
                                  std::to_string(C) + ")");
    const NumArray ls = log_softmax(logits);
    LossGrad out;
    out.dlogits = NumArray::zeros({B, C});
    double total = 0.0;
    const double invB = 1.0 / static_cast<double>(B);
    for (std::size_t b = 0; b < B; ++b) {
        total -= ls.at(b, static_cast<std::size_t>(labels[b]));
        for (std::size_t c = 0; c < C; ++c) out.dlogits.at(b, c) = std::exp(ls.at(b, c)) * invB;
        out.dlogits.at(b, static_cast<std::size_t>(labels[b])) -= invB;
    }
    out.value = total * invB;
    return out;
}

namespace {

KlFull kl_impl(const NumArray& p_logits, const NumArray& q_logits, double temperature, bool want_dp) {
    require_shape(p_logits, q_logits, "kl_divergence");
    if (p_logits.rank() != 2) throw ShapeError("kl_divergence: expected logits[BxC]");
    if (temperature <= 0.0) throw InvalidArgument("kl_divergence: temperature must be positive");
    const std::size_t B = p_logits.dim(0), C = p_logits.dim(1);
    const double invT = 1.0 / temperature;

    NumArray ps = p_logits, qs = q_logits;
    if (temperature != 1.0) {
        for (double& v : ps.data) v *= invT;
        for (double& v : qs.data) v *= invT;
    }
    const NumArray lp = log_softmax(ps);
    const NumArray lq = log_softmax(qs);

    // Teacher log-probs floored (at log 1e-12) so vanishing classes cannot
    // inject huge magnitudes; the gradient is exact regardless of the floor.
    const double log_floor = std::log(1e-12);
    KlFull out;
    out.dq_logits = NumArray::zeros({B, C});
    if (want_dp) out.dp_logits = NumArray::zeros({B, C});
    const double invB = 1.0 / static_cast<double>(B);
    double total = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
        double row = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
            const double pbar = std::exp(lp.at(b, c));
            row += pbar * (std::max(lp.at(b, c), log_floor) - std::max(lq.at(b, c), log_floor));
        }
        total += row;
        for (std::size_t c = 0; c < C; ++c) {
            const double pbar = std::exp(lp.at(b, c));
            const double qbar = std::exp(lq.at(b, c));
            out.dq_logits.at(b, c) = (qbar - pbar) * invB * invT;
            if (want_dp)
                out.dp_logits.at(b, c) = pbar * ((lp.at(b, c) - lq.at(b, c)) - row) * invB * invT;
        }
    }
    out.value = std::max(0.0, total * invB);  // KL is never negative; clip rounding dust
    return out;
}

}  // namespace

LossGrad kl_divergence(const NumArray& p_logits, const NumArray& q_logits, double temperature) {
    KlFull full = kl_impl(p_logits, q_logits, temperature, false);
    return LossGrad{full.value, std::move(full.dq_logits)};
}

KlFull kl_divergence_full(const NumArray& p_logits, const NumArray& q_logits, double temperature) {
    return kl_impl(p_logits, q_logits, temperature, true);
}

// ---------------------------------------------------------------------------
// Optimizers

namespace {

void check_grad_finite(const ParamStore& ps, const std::string& name) {
    if (!ps.grad(name).all_finite())
        throw DivergenceError("non-finite gradient in parameter '" + name + "'");
}

}  // namespace

void sgd_step(ParamStore& ps, double lr, double momentum) {
    if (ps.frozen()) throw ContractViolation("sgd_step: parameter store is frozen");
    for (const std::string& name : ps.param_names()) {
        check_grad_finite(ps, name);
        const std::string mname = "opt." + name + ".m";
        if (!ps.has(mname)) ps.add(mname, NumArray::zeros(ps.value(name).shape));
        NumArray& v = ps.value(name);
        NumArray& g = ps.grad(name);
        NumArray& m = ps.value(mname);
        for (std::size_t i = 0; i < v.numel(); ++i) {
            m.data[i] = momentum * m.data[i] + g.data[i];
            v.data[i] -= lr * m.data[i];
        }
    }
    ps.zero_grads();
}

void adam_step(ParamStore& ps, double lr, double beta1, double beta2, double eps) {
    if (ps.frozen()) throw ContractViolation("adam_step: parameter store is frozen");
    if (!ps.has("opt.t")) ps.add("opt.t", NumArray::zeros({1}));
    double& t = ps.value("opt.t").data[0];
    t += 1.0;
    const double bc1 = 1.0 - std::pow(beta1, t);
    const double bc2 = 1.0 - std::pow(beta2, t);
    for (const std::string& name : ps.param_names()) {
        check_grad_finite(ps, name);
        const std::string mname = "opt." + name + ".m";
        const std::string vname = "opt." + name + ".v";
        if (!ps.has(mname)) {
            ps.add(mname, NumArray::zeros(ps.value(name).shape));
            ps.add(vname, NumArray::zeros(ps.value(name).shape));
        }
        NumArray& val = ps.value(name);
        NumArray& g = ps.grad(name);
        NumArray& m = ps.value(mname);
        NumArray& v = ps.value(vname);
        for (std::size_t i = 0; i < val.numel(); ++i) {
            m.data[i] = beta1 * m.data[i] + (1.0 - beta1) * g.data[i];
            v.data[i] = beta2 * v.data[i] + (1.0 - beta2) * g.data[i] * g.data[i];
            const double mhat = m.data[i] / bc1;
            const double vhat = v.data[i] / bc2;
            val.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
    ps.zero_grads();
}

// ---------------------------------------------------------------------------
// Gradient checking

GradCheckReport grad_check(const std::function<double()>& loss_and_grad, ParamStore& ps,
                           double h, double tolerance) {
    ps.zero_grads();
    loss_and_grad();

    // Snapshot the analytic gradients before probing.
    std::vector<std::pair<std::string, std::vector<double>>> analytic;
    for (const std::string& name : ps.param_names()) analytic.emplace_back(name, ps.grad(name).data);

    GradCheckReport report;
    for (const auto& [name, grad] : analytic) {
        NumArray& val = ps.value(name);
        const std::size_t n = val.numel();
        const std::size_t samples = std::min<std::size_t>(n, 200);
        for (std::size_t s = 0; s < samples; ++s) {
            const std::size_t i = s * n / samples;  // deterministic spread
            const double orig = val.data[i];
            val.data[i] = orig + h;
            const double fp = loss_and_grad();
            val.data[i] = orig - h;
            const double fm = loss_and_grad();
            val.data[i] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            const double denom = std::max({std::abs(numeric), std::abs(grad[i]), 1e-6});
            const double rel = std::abs(numeric - grad[i]) / denom;
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_param = name;
                report.worst_index = i;
                report.analytic = grad[i];
                report.numeric = numeric;
            }
        }
    }
    report.passed = report.max_rel_error <= tolerance;
    ps.zero_grads();
    loss_and_grad();  // restore grads to the analytic state
    return report;
}

}  // namespace cmt::diff
