#include "moef/tensor.hpp"

#include "moef/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace moef {

namespace {

std::size_t numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string to_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

std::shared_ptr<TensorImpl> make_impl(std::vector<std::size_t> shape, std::vector<double> values) {
    if (shape.empty()) throw DimensionError("tensor shape must have at least one dimension");
    for (std::size_t d : shape) {
        if (d == 0) throw DimensionError("tensor shape dimensions must be positive, got " + to_str(shape));
    }
    if (numel(shape) != values.size()) {
        throw DimensionError("value count " + std::to_string(values.size()) +
                             " does not match shape " + to_str(shape));
    }
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->values = std::move(values);
    return impl;
}

std::vector<double>& grad_buf(TensorImpl& t) {
    if (t.grad.empty()) t.grad.assign(t.values.size(), 0.0);
    return t.grad;
}

// ---- dense kernels ----------------------------------------------------
// C (m x n) += op(A) * op(B), k = contraction length.

void gemm_nn(std::size_t m, std::size_t n, std::size_t k,
             const double* a, const double* b, double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t l = 0; l < k; ++l) {
            const double av = arow[l];
            if (av == 0.0) continue;
            const double* brow = b + l * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k,
             const double* a, const double* b, double* c) {
    // B given as (n x k): C[i][j] += dot(A row i, B row j)
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double acc = 0.0;
            for (std::size_t l = 0; l < k; ++l) acc += arow[l] * brow[l];
            crow[j] += acc;
        }
    }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k,
             const double* a, const double* b, double* c) {
    // A given as (k x m): C[i][j] += A[l][i] * B[l][j]
    for (std::size_t l = 0; l < k; ++l) {
        const double* arow = a + l * m;
        const double* brow = b + l * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double av = arow[i];
            if (av == 0.0) continue;
            double* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

struct MatDims {
    std::size_t rows, cols;
};

} // namespace

// ---- Tensor -----------------------------------------------------------

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    std::size_t n = numel(shape);
    return Tensor(make_impl(std::move(shape), std::vector<double>(n, 0.0)));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
    std::size_t n = numel(shape);
    return Tensor(make_impl(std::move(shape), std::vector<double>(n, value)));
}

Tensor Tensor::from_values(std::vector<std::size_t> shape, std::vector<double> values) {
    return Tensor(make_impl(std::move(shape), std::move(values)));
}

Tensor Tensor::scalar(double value) {
    return Tensor(make_impl({1}, {value}));
}

Tensor Tensor::param(std::vector<std::size_t> shape, std::vector<double> values) {
    Tensor t(make_impl(std::move(shape), std::move(values)));
    t.impl_->requires_grad = true;
    return t;
}

const std::vector<std::size_t>& Tensor::shape() const { return impl_->shape; }
std::size_t Tensor::rank() const { return impl_->shape.size(); }
std::size_t Tensor::size() const { return impl_->values.size(); }

std::size_t Tensor::rows() const {
    return rank() == 1 ? 1 : impl_->shape[0];
}

std::size_t Tensor::cols() const {
    return rank() == 1 ? impl_->shape[0] : impl_->shape[rank() - 1];
}

double* Tensor::data() { return impl_->values.data(); }
const double* Tensor::data() const { return impl_->values.data(); }
double Tensor::at(std::size_t i) const { return impl_->values[i]; }

double Tensor::scalar_value() const {
    if (size() != 1) throw ContractError("scalar_value on tensor of shape " + shape_str());
    return impl_->values[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }
void Tensor::set_requires_grad(bool v) { impl_->requires_grad = v; }

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

const std::vector<double>& Tensor::grad() const {
    if (!has_grad()) throw ContractError("gradient not populated; run backward first");
    return impl_->grad;
}

std::vector<double>& Tensor::mutable_grad() { return grad_buf(*impl_); }

void Tensor::clear_grad() {
    impl_->grad.clear();
    impl_->grad_rows.clear();
}

const std::vector<std::size_t>& Tensor::grad_rows() const { return impl_->grad_rows; }

bool Tensor::all_finite() const {
    for (double v : impl_->values) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_str() const { return to_str(impl_->shape); }

// ---- Tape -------------------------------------------------------------

namespace {
thread_local Tape* g_current_tape = nullptr;
}

Tape::Tape() = default;
Tape::~Tape() = default;

Tape* Tape::current() { return g_current_tape; }

void Tape::record(std::function<void()> backward_fn) {
    ops_.push_back(std::move(backward_fn));
}

void Tape::backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1) {
        throw ContractError("backward requires a scalar loss, got shape " +
                            (loss.defined() ? loss.shape_str() : std::string("<undefined>")));
    }
    if (backward_done_) {
        throw ContractError("backward called twice on the same tape without reset");
    }
    backward_done_ = true;
    grad_buf(*loss.impl())[0] += 1.0;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

void Tape::clear() {
    ops_.clear();
    backward_done_ = false;
}

TapeGuard::TapeGuard(Tape& tape) : prev_(g_current_tape) { g_current_tape = &tape; }
TapeGuard::~TapeGuard() { g_current_tape = prev_; }

// ---- op helpers -------------------------------------------------------

namespace {

bool tracking(std::initializer_list<const Tensor*> inputs) {
    if (Tape::current() == nullptr) return false;
    for (const Tensor* t : inputs) {
        if (t->requires_grad()) return true;
    }
    return false;
}

Tensor make_result(std::vector<std::size_t> shape, std::vector<double> values, bool track) {
    Tensor out = Tensor::from_values(std::move(shape), std::move(values));
    if (track) out.set_requires_grad(true);
    return out;
}

// Shared structure of every unary elementwise op: forward map + a local
// derivative computed from (x, y).
Tensor unary_op(const Tensor& x, double (*fwd)(double), double (*dydx)(double, double)) {
    const std::size_t n = x.size();
    std::vector<double> out(n);
    const double* xv = x.data();
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(xv[i]);
    bool track = tracking({&x});
    Tensor y = make_result(x.shape(), std::move(out), track);
    if (track) {
        auto xi = x.impl();
        auto yi = y.impl();
        Tape::current()->record([xi, yi, dydx]() {
            if (yi->grad.empty()) return;
            if (!xi->requires_grad) return;
            auto& gx = grad_buf(*xi);
            for (std::size_t i = 0; i < gx.size(); ++i) {
                gx[i] += yi->grad[i] * dydx(xi->values[i], yi->values[i]);
            }
        });
    }
    return y;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": operand shapes differ, " + a.shape_str() +
                             " vs " + b.shape_str());
    }
}

} // namespace

// ---- arithmetic -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() > 2 || b.rank() > 2) {
        throw DimensionError("matmul supports rank 1 or 2 operands, got " + a.shape_str() +
                             " and " + b.shape_str());
    }
    // rank-1 LHS acts as a row, rank-1 RHS as a column.
    const MatDims ad = a.rank() == 2 ? MatDims{a.shape()[0], a.shape()[1]}
                                     : MatDims{1, a.shape()[0]};
    const MatDims bd = b.rank() == 2 ? MatDims{b.shape()[0], b.shape()[1]}
                                     : MatDims{b.shape()[0], 1};
    if (ad.cols != bd.rows) {
        throw DimensionError("matmul: inner dimensions disagree, " + a.shape_str() + " x " +
                             b.shape_str());
    }
    const std::size_t m = ad.rows, k = ad.cols, n = bd.cols;
    std::vector<double> out(m * n, 0.0);
    gemm_nn(m, n, k, a.data(), b.data(), out.data());

    std::vector<std::size_t> out_shape;
    if (a.rank() == 2 && b.rank() == 2) out_shape = {m, n};
    else if (a.rank() == 2) out_shape = {m};
    else if (b.rank() == 2) out_shape = {n};
    else out_shape = {1};

    bool track = tracking({&a, &b});
    Tensor c = make_result(std::move(out_shape), std::move(out), track);
    if (track) {
        auto ai = a.impl(), bi = b.impl(), ci = c.impl();
        Tape::current()->record([ai, bi, ci, m, n, k]() {
            if (ci->grad.empty()) return;
            const double* gc = ci->grad.data();
            if (ai->requires_grad) {
                // dA (m x k) += dC (m x n) * B^T (n x k)
                gemm_nt(m, k, n, gc, bi->values.data(), grad_buf(*ai).data());
            }
            if (bi->requires_grad) {
                // dB (k x n) += A^T (k x m) * dC (m x n)
                gemm_tn(k, n, m, ai->values.data(), gc, grad_buf(*bi).data());
            }
        });
    }
    return c;
}

Tensor transpose(const Tensor& x) {
    if (x.rank() != 2) throw DimensionError("transpose requires rank 2, got " + x.shape_str());
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    std::vector<double> out(m * n);
    const double* xv = x.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = xv[i * n + j];
    bool track = tracking({&x});
    Tensor y = make_result({n, m}, std::move(out), track);
    if (track) {
        auto xi = x.impl(), yi = y.impl();
        Tape::current()->record([xi, yi, m, n]() {
            if (yi->grad.empty() || !xi->requires_grad) return;
            auto& gx = grad_buf(*xi);
            const double* gy = yi->grad.data();
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t i = 0; i < m; ++i) gx[i * n + j] += gy[j * m + i];
        });
    }
    return y;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    const std::size_t n = a.size();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = a.data()[i] + b.data()[i];
    bool track = tracking({&a, &b});
    Tensor c = make_result(a.shape(), std::move(out), track);
    if (track) {
        auto ai = a.impl(), bi = b.impl(), ci = c.impl();
        Tape::current()->record([ai, bi, ci]() {
            if (ci->grad.empty()) return;
            if (ai->requires_grad) {
                auto& g = grad_buf(*ai);
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += ci->grad[i];
            }
            if (bi->requires_grad) {
                auto& g = grad_buf(*bi);
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += ci->grad[i];
            }
        });
    }
    return c;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    const std::size_t n = a.size();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = a.data()[i] - b.data()[i];
    bool track = tracking({&a, &b});
    Tensor c = make_result(a.shape(), std::move(out), track);
    if (track) {
        auto ai = a.impl(), bi = b.impl(), ci = c.impl();
        Tape::current()->record([ai, bi, ci]() {
            if (ci->grad.empty()) return;
            if (ai->requires_grad) {
                auto& g = grad_buf(*ai);
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += ci->grad[i];
            }
            if (bi->requires_grad) {
                auto& g = grad_buf(*bi);
                for (std::size_t i = 0; i < g.size(); ++i) g[i] -= ci->grad[i];
            }
        });
    }
    return c;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    const std::size_t n = a.size();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = a.data()[i] * b.data()[i];
    bool track = tracking({&a, &b});
    Tensor c = make_result(a.shape(), std::move(out), track);
    if (track) {
        auto ai = a.impl(), bi = b.impl(), ci = c.impl();
        Tape::current()->record([ai, bi, ci]() {
            if (ci->grad.empty()) return;
            if (ai->requires_grad) {
                auto& g = grad_buf(*ai);
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += ci->grad[i] * bi->values[i];
            }
            if (bi->requires_grad) {
                auto& g = grad_buf(*bi);
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += ci->grad[i] * ai->values[i];
            }
        });
    }
    return c;
}

Tensor add_rowvec(const Tensor& x, const Tensor& v) {
    if (x.rank() != 2 || v.rank() != 1 || x.shape()[1] != v.shape()[0]) {
        throw DimensionError("add_rowvec: incompatible shapes " + x.shape_str() + " and " +
                             v.shape_str());
    }
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x.data()[i * n + j] + v.data()[j];
    bool track = tracking({&x, &v});
    Tensor y = make_result({m, n}, std::move(out), track);
    if (track) {
        auto xi = x.impl(), vi = v.impl(), yi = y.impl();
        Tape::current()->record([xi, vi, yi, m, n]() {
            if (yi->grad.empty()) return;
            if (xi->requires_grad) {
                auto& g = grad_buf(*xi);
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[i];
            }
            if (vi->requires_grad) {
                auto& g = grad_buf(*vi);
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) g[j] += yi->grad[i * n + j];
            }
        });
    }
    return y;
}

Tensor mul_colvec(const Tensor& x, const Tensor& c) {
    if (x.rank() != 2 || c.rank() != 1 || x.shape()[0] != c.shape()[0]) {
        throw DimensionError("mul_colvec: incompatible shapes " + x.shape_str() + " and " +
                             c.shape_str());
    }
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x.data()[i * n + j] * c.data()[i];
    bool track = tracking({&x, &c});
    Tensor y = make_result({m, n}, std::move(out), track);
    if (track) {
        auto xi = x.impl(), ci = c.impl(), yi = y.impl();
        Tape::current()->record([xi, ci, yi, m, n]() {
            if (yi->grad.empty()) return;
            if (xi->requires_grad) {
                auto& g = grad_buf(*xi);
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j)
                        g[i * n + j] += yi->grad[i * n + j] * ci->values[i];
            }
            if (ci->requires_grad) {
                auto& g = grad_buf(*ci);
                for (std::size_t i = 0; i < m; ++i) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j)
                        acc += yi->grad[i * n + j] * xi->values[i * n + j];
                    g[i] += acc;
                }
            }
        });
    }
    return y;
}

Tensor scale(const Tensor& x, double c) {
    const std::size_t n = x.size();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = x.data()[i] * c;
    bool track = tracking({&x});
    Tensor y = make_result(x.shape(), std::move(out), track);
    if (track) {
        auto xi = x.impl(), yi = y.impl();
        Tape::current()->record([xi, yi, c]() {
            if (yi->grad.empty() || !xi->requires_grad) return;
            auto& g = grad_buf(*xi);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[i] * c;
        });
    }
    return y;
}

// ---- elementwise nonlinearities ----------------------------------------

Tensor sigmoid(const Tensor& x) {
    return unary_op(
        x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
    return unary_op(
        x, [](double v) { return std::tanh(v); },
        [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& x) {
    return unary_op(
        x, [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor log1p(const Tensor& x) {
    return unary_op(
        x, [](double v) { return std::log1p(v); },
        [](double v, double) { return 1.0 / (1.0 + v); });
}

// ---- softmax -----------------------------------------------------------

Tensor softmax(const Tensor& x, std::size_t axis) {
    if (axis >= x.rank()) {
        throw DimensionError("softmax: axis " + std::to_string(axis) + " out of range for shape " +
                             x.shape_str());
    }
    const auto& shape = x.shape();
    const std::size_t n = shape[axis];
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];

    std::vector<double> out(x.size());
    const double* xv = x.data();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * n * inner + in;
            double mx = xv[base];
            for (std::size_t t = 1; t < n; ++t) mx = std::max(mx, xv[base + t * inner]);
            double total = 0.0;
            for (std::size_t t = 0; t < n; ++t) {
                double e = std::exp(xv[base + t * inner] - mx);
                out[base + t * inner] = e;
                total += e;
            }
            for (std::size_t t = 0; t < n; ++t) out[base + t * inner] /= total;
        }
    }
    bool track = tracking({&x});
    Tensor y = make_result(shape, std::move(out), track);
    if (track) {
        auto xi = x.impl(), yi = y.impl();
        Tape::current()->record([xi, yi, outer, inner, n]() {
            if (yi->grad.empty() || !xi->requires_grad) return;
            auto& gx = grad_buf(*xi);
            const double* yv = yi->values.data();
            const double* gy = yi->grad.data();
            for (std::size_t o = 0; o < outer; ++o) {
                for (std::size_t in = 0; in < inner; ++in) {
                    const std::size_t base = o * n * inner + in;
                    double dot = 0.0;
                    for (std::size_t t = 0; t < n; ++t)
                        dot += gy[base + t * inner] * yv[base + t * inner];
                    for (std::size_t t = 0; t < n; ++t) {
                        const std::size_t idx = base + t * inner;
                        gx[idx] += yv[idx] * (gy[idx] - dot);
                    }
                }
            }
        });
    }
    return y;
}

// ---- reductions --------------------------------------------------------

Tensor sum(const Tensor& x) {
    double total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) total += x.data()[i];
    bool track = tracking({&x});
    Tensor y = make_result({1}, {total}, track);
    if (track) {
        auto xi = x.impl(), yi = y.impl();
        Tape::current()->record([xi, yi]() {
            if (yi->grad.empty() || !xi->requires_grad) return;
            auto& g = grad_buf(*xi);
            const double gy = yi->grad[0];
            for (double& v : g) v += gy;
        });
    }
    return y;
}

Tensor mean(const Tensor& x) {
    double total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) total += x.data()[i];
    const double inv = 1.0 / static_cast<double>(x.size());
    bool track = tracking({&x});
    Tensor y = make_result({1}, {total * inv}, track);
    if (track) {
        auto xi = x.impl(), yi = y.impl();
        Tape::current()->record([xi, yi, inv]() {
            if (yi->grad.empty() || !xi->requires_grad) return;
            auto& g = grad_buf(*xi);
            const double gy = yi->grad[0] * inv;
            for (double& v : g) v += gy;
        });
    }
    return y;
}

Tensor mean_rows(const Tensor& x) {
    if (x.rank() != 2) throw DimensionError("mean_rows requires rank 2, got " + x.shape_str());
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    std::vector<double> out(n, 0.0);
    // Column entries are summed in value order so the result is invariant
    // to row permutations bit-for-bit.
    std::vector<double> colvals(m);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < m; ++i) colvals[i] = x.data()[i * n + j];
        std::sort(colvals.begin(), colvals.end());
        double acc = 0.0;
        for (double v : colvals) acc += v;
        out[j] = acc / static_cast<double>(m);
    }
    bool track = tracking({&x});
    Tensor y = make_result({n}, std::move(out), track);
    if (track) {
        auto xi = x.impl(), yi = y.impl();
        Tape::current()->record([xi, yi, m, n]() {
            if (yi->grad.empty() || !xi->requires_grad) return;
            auto& g = grad_buf(*xi);
            const double inv = 1.0 / static_cast<double>(m);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) g[i * n + j] += yi->grad[j] * inv;
        });
    }
    return y;
}

// ---- shape ops ---------------------------------------------------------

Tensor reshape(const Tensor& x, std::vector<std::size_t> new_shape) {
    if (numel(new_shape) != x.size()) {
        throw DimensionError("reshape: " + x.shape_str() + " has " + std::to_string(x.size()) +
                             " elements, target " + to_str(new_shape) + " needs " +
                             std::to_string(numel(new_shape)));
    }
    bool track = tracking({&x});
    Tensor y = make_result(std::move(new_shape),
                           std::vector<double>(x.data(), x.data() + x.size()), track);
    if (track) {
        auto xi = x.impl(), yi = y.impl();
        Tape::current()->record([xi, yi]() {
            if (yi->grad.empty() || !xi->requires_grad) return;
            auto& g = grad_buf(*xi);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[i];
        });
    }
    return y;
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw ContractError("concat of zero tensors");
    const std::size_t rank = parts[0].rank();
    if (axis >= rank) throw DimensionError("concat: axis out of range");
    if (rank > 2) throw DimensionError("concat supports rank 1 or 2");
    for (const Tensor& p : parts) {
        if (p.rank() != rank) throw DimensionError("concat: mixed ranks");
        for (std::size_t d = 0; d < rank; ++d) {
            if (d != axis && p.shape()[d] != parts[0].shape()[d]) {
                throw DimensionError("concat: shape mismatch " + p.shape_str() + " vs " +
                                     parts[0].shape_str());
            }
        }
    }
    bool track = Tape::current() != nullptr &&
                 std::any_of(parts.begin(), parts.end(),
                             [](const Tensor& t) { return t.requires_grad(); });

    Tensor y;
    if (rank == 1 || axis == 0) {
        // Stack along rows (or plain vector concatenation).
        std::size_t total = 0;
        for (const Tensor& p : parts) total += p.shape()[0];
        std::vector<std::size_t> shape = parts[0].shape();
        shape[0] = total;
        std::vector<double> out;
        out.reserve(numel(shape));
        for (const Tensor& p : parts) out.insert(out.end(), p.data(), p.data() + p.size());
        y = make_result(std::move(shape), std::move(out), track);
        if (track) {
            std::vector<std::shared_ptr<TensorImpl>> impls;
            for (const Tensor& p : parts) impls.push_back(p.impl());
            auto yi = y.impl();
            Tape::current()->record([impls, yi]() {
                if (yi->grad.empty()) return;
                std::size_t offset = 0;
                for (const auto& pi : impls) {
                    const std::size_t len = pi->values.size();
                    if (pi->requires_grad) {
                        auto& g = grad_buf(*pi);
                        for (std::size_t i = 0; i < len; ++i) g[i] += yi->grad[offset + i];
                    }
                    offset += len;
                }
            });
        }
    } else {
        // axis == 1 on rank-2: concatenate columns per row.
        const std::size_t m = parts[0].shape()[0];
        std::size_t total_cols = 0;
        for (const Tensor& p : parts) total_cols += p.shape()[1];
        std::vector<double> out(m * total_cols);
        std::size_t col_off = 0;
        for (const Tensor& p : parts) {
            const std::size_t pc = p.shape()[1];
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < pc; ++j)
                    out[i * total_cols + col_off + j] = p.data()[i * pc + j];
            col_off += pc;
        }
        y = make_result({m, total_cols}, std::move(out), track);
        if (track) {
            std::vector<std::shared_ptr<TensorImpl>> impls;
            for (const Tensor& p : parts) impls.push_back(p.impl());
            auto yi = y.impl();
            Tape::current()->record([impls, yi, m, total_cols]() {
                if (yi->grad.empty()) return;
                std::size_t col_off = 0;
                for (const auto& pi : impls) {
                    const std::size_t pc = pi->shape[1];
                    if (pi->requires_grad) {
                        auto& g = grad_buf(*pi);
                        for (std::size_t i = 0; i < m; ++i)
                            for (std::size_t j = 0; j < pc; ++j)
                                g[i * pc + j] += yi->grad[i * total_cols + col_off + j];
                    }
                    col_off += pc;
                }
            });
        }
    }
    return y;
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
    if (x.rank() != 2) throw DimensionError("slice_rows requires rank 2, got " + x.shape_str());
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    if (begin >= end || end > m) {
        throw DimensionError("slice_rows: range [" + std::to_string(begin) + ", " +
                             std::to_string(end) + ") invalid for " + x.shape_str());
    }
    const std::size_t rows = end - begin;
    std::vector<double> out(x.data() + begin * n, x.data() + end * n);
    bool track = tracking({&x});
    Tensor y = make_result({rows, n}, std::move(out), track);
    if (track) {
        auto xi = x.impl(), yi = y.impl();
        Tape::current()->record([xi, yi, begin, n, rows]() {
            if (yi->grad.empty() || !xi->requires_grad) return;
            auto& g = grad_buf(*xi);
            for (std::size_t i = 0; i < rows * n; ++i) g[begin * n + i] += yi->grad[i];
        });
    }
    return y;
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
    if (x.rank() != 2) throw DimensionError("slice_cols requires rank 2, got " + x.shape_str());
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    if (begin >= end || end > n) {
        throw DimensionError("slice_cols: range [" + std::to_string(begin) + ", " +
                             std::to_string(end) + ") invalid for " + x.shape_str());
    }
    const std::size_t cols = end - begin;
    std::vector<double> out(m * cols);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = x.data()[i * n + begin + j];
    bool track = tracking({&x});
    Tensor y = make_result({m, cols}, std::move(out), track);
    if (track) {
        auto xi = x.impl(), yi = y.impl();
        Tape::current()->record([xi, yi, begin, m, n, cols]() {
            if (yi->grad.empty() || !xi->requires_grad) return;
            auto& g = grad_buf(*xi);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < cols; ++j)
                    g[i * n + begin + j] += yi->grad[i * cols + j];
        });
    }
    return y;
}

// ---- embedding ---------------------------------------------------------

Tensor embedding_lookup(const Tensor& table, const std::vector<std::size_t>& ids) {
    if (table.rank() != 2) {
        throw DimensionError("embedding_lookup: table must be rank 2, got " + table.shape_str());
    }
    const std::size_t vocab = table.shape()[0], width = table.shape()[1];
    for (std::size_t id : ids) {
        if (id >= vocab) {
            throw DimensionError("embedding_lookup: id " + std::to_string(id) +
                                 " out of range for table " + table.shape_str());
        }
    }
    if (ids.empty()) throw ContractError("embedding_lookup with no ids");
    std::vector<double> out(ids.size() * width);
    for (std::size_t r = 0; r < ids.size(); ++r) {
        const double* src = table.data() + ids[r] * width;
        std::copy(src, src + width, out.begin() + r * width);
    }
    bool track = tracking({&table});
    Tensor y = make_result({ids.size(), width}, std::move(out), track);
    if (track) {
        auto ti = table.impl(), yi = y.impl();
        auto ids_copy = ids;
        Tape::current()->record([ti, yi, ids_copy, width]() {
            if (yi->grad.empty() || !ti->requires_grad) return;
            auto& g = grad_buf(*ti);
            for (std::size_t r = 0; r < ids_copy.size(); ++r) {
                const double* src = yi->grad.data() + r * width;
                double* dst = g.data() + ids_copy[r] * width;
                for (std::size_t j = 0; j < width; ++j) dst[j] += src[j];
            }
            ti->grad_rows.insert(ti->grad_rows.end(), ids_copy.begin(), ids_copy.end());
        });
    }
    return y;
}

// ---- layer norm ----------------------------------------------------------

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    if (x.rank() != 2) throw DimensionError("layer_norm requires rank 2, got " + x.shape_str());
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    if (gain.rank() != 1 || gain.shape()[0] != n || bias.rank() != 1 || bias.shape()[0] != n) {
        throw DimensionError("layer_norm: gain/bias must be rank 1 of width " + std::to_string(n));
    }
    std::vector<double> out(m * n);
    std::vector<double> xhat(m * n);
    std::vector<double> inv_std(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = x.data() + i * n;
        double mu = 0.0;
        for (std::size_t j = 0; j < n; ++j) mu += row[j];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double d = row[j] - mu;
            var += d * d;
        }
        var /= static_cast<double>(n);
        const double istd = 1.0 / std::sqrt(var + eps);
        inv_std[i] = istd;
        for (std::size_t j = 0; j < n; ++j) {
            const double h = (row[j] - mu) * istd;
            xhat[i * n + j] = h;
            out[i * n + j] = h * gain.data()[j] + bias.data()[j];
        }
    }
    bool track = tracking({&x, &gain, &bias});
    Tensor y = make_result({m, n}, std::move(out), track);
    if (track) {
        auto xi = x.impl(), gi = gain.impl(), bi = bias.impl(), yi = y.impl();
        auto xhat_s = std::make_shared<std::vector<double>>(std::move(xhat));
        auto istd_s = std::make_shared<std::vector<double>>(std::move(inv_std));
        Tape::current()->record([xi, gi, bi, yi, xhat_s, istd_s, m, n]() {
            if (yi->grad.empty()) return;
            const double* gy = yi->grad.data();
            const auto& xh = *xhat_s;
            if (gi->requires_grad) {
                auto& g = grad_buf(*gi);
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) g[j] += gy[i * n + j] * xh[i * n + j];
            }
            if (bi->requires_grad) {
                auto& g = grad_buf(*bi);
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) g[j] += gy[i * n + j];
            }
            if (xi->requires_grad) {
                auto& g = grad_buf(*xi);
                const double invn = 1.0 / static_cast<double>(n);
                for (std::size_t i = 0; i < m; ++i) {
                    double sum_dh = 0.0, sum_dh_h = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                        const double dh = gy[i * n + j] * gi->values[j];
                        sum_dh += dh;
                        sum_dh_h += dh * xh[i * n + j];
                    }
                    for (std::size_t j = 0; j < n; ++j) {
                        const double dh = gy[i * n + j] * gi->values[j];
                        g[i * n + j] += (*istd_s)[i] *
                                        (dh - invn * sum_dh - xh[i * n + j] * invn * sum_dh_h);
                    }
                }
            }
        });
    }
    return y;
}

// ---- loss ----------------------------------------------------------------

Tensor bce_loss(const Tensor& y_hat, const std::vector<double>& labels, double clip_eps) {
    if (labels.empty()) throw ContractError("bce_loss: empty batch");
    if (y_hat.size() != labels.size()) {
        throw DimensionError("bce_loss: " + std::to_string(y_hat.size()) + " predictions vs " +
                             std::to_string(labels.size()) + " labels");
    }
    const std::size_t b = labels.size();
    const double lo = clip_eps, hi = 1.0 - clip_eps;
    double total = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        const double p = std::clamp(y_hat.data()[i], lo, hi);
        total += labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p);
    }
    const double loss = -total / static_cast<double>(b);
    bool track = tracking({&y_hat});
    Tensor y = make_result({1}, {loss}, track);
    if (track) {
        auto pi = y_hat.impl(), yi = y.impl();
        auto labels_copy = labels;
        Tape::current()->record([pi, yi, labels_copy, lo, hi, b]() {
            if (yi->grad.empty() || !pi->requires_grad) return;
            auto& g = grad_buf(*pi);
            const double gy = yi->grad[0];
            for (std::size_t i = 0; i < b; ++i) {
                const double raw = pi->values[i];
                if (raw <= lo || raw >= hi) continue; // clipped: flat region
                g[i] += gy * (raw - labels_copy[i]) /
                        (raw * (1.0 - raw) * static_cast<double>(b));
            }
        });
    }
    return y;
}

} // namespace moef
