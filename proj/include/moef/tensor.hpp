#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace moef {

class Tape;

struct TensorImpl {
    std::vector<std::size_t> shape;
    std::vector<double> values;
    // Gradient buffer; empty until backward first touches this tensor.
    std::vector<double> grad;
    // Rows known to carry all nonzero gradient entries, filled by the
    // embedding-lookup backward. Empty means "treat grad as dense".
    std::vector<std::size_t> grad_rows;
    bool requires_grad = false;
};

// Dense row-major tensor of 64-bit floats with reverse-mode gradients.
// Copies are shallow (shared storage), like the usual NN-engine handle.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor full(std::vector<std::size_t> shape, double value);
    static Tensor from_values(std::vector<std::size_t> shape, std::vector<double> values);
    static Tensor scalar(double value);
    // Leaf parameter: participates in gradient accumulation.
    static Tensor param(std::vector<std::size_t> shape, std::vector<double> values);

    bool defined() const { return impl_ != nullptr; }
    const std::vector<std::size_t>& shape() const;
    std::size_t rank() const;
    std::size_t size() const;
    // rank-2 helpers; a rank-1 tensor counts as a single row.
    std::size_t rows() const;
    std::size_t cols() const;

    double* data();
    const double* data() const;
    double at(std::size_t i) const;
    double scalar_value() const;

    bool requires_grad() const;
    void set_requires_grad(bool v);

    bool has_grad() const;
    const std::vector<double>& grad() const;
    std::vector<double>& mutable_grad(); // allocates zeros on first use
    void clear_grad();
    const std::vector<std::size_t>& grad_rows() const;

    bool all_finite() const;
    std::string shape_str() const;

    std::shared_ptr<TensorImpl> impl() const { return impl_; }

private:
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<TensorImpl> impl_;
};

// Records one backward closure per forward operation; replaying them in
// reverse order accumulates dloss/dleaf into every requires_grad tensor
// reachable from the loss.
class Tape {
public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    void record(std::function<void()> backward_fn);
    // Seeds grad(loss)=1 and runs the recorded closures in reverse.
    // Calling twice without clear() is an error.
    void backward(const Tensor& loss);
    void clear();

    std::size_t num_ops() const { return ops_.size(); }
    bool backward_done() const { return backward_done_; }

    // Thread-local active tape; null means "no gradient recording".
    static Tape* current();

private:
    friend class TapeGuard;
    std::vector<std::function<void()>> ops_;
    bool backward_done_ = false;
};

// Scopes a tape as the thread-local recording target.
class TapeGuard {
public:
    explicit TapeGuard(Tape& tape);
    ~TapeGuard();
    TapeGuard(const TapeGuard&) = delete;
    TapeGuard& operator=(const TapeGuard&) = delete;

private:
    Tape* prev_;
};

// ---- operations ------------------------------------------------------
// All ops compute eagerly and, when a tape is active and an input requires
// grad, record a backward closure.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// X (m x n) plus row vector v (n), broadcast over rows.
Tensor add_rowvec(const Tensor& x, const Tensor& v);
// X (m x n) times column vector c (m), broadcast over columns.
Tensor mul_colvec(const Tensor& x, const Tensor& c);
Tensor scale(const Tensor& x, double c);

Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor log1p(const Tensor& x);

Tensor softmax(const Tensor& x, std::size_t axis);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Column means of a rank-2 tensor; accumulation order is canonicalized so
// the result is bit-identical under row permutation.
Tensor mean_rows(const Tensor& x);

Tensor reshape(const Tensor& x, std::vector<std::size_t> new_shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);

// rows of `table` selected by `ids`; backward scatter-adds and records the
// touched rows for sparse optimizer updates.
Tensor embedding_lookup(const Tensor& table, const std::vector<std::size_t>& ids);

// Per-row layer normalization with learnable gain/bias (width = cols).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// Mean binary cross-entropy with predictions clipped to [eps, 1-eps].
Tensor bce_loss(const Tensor& y_hat, const std::vector<double>& labels, double clip_eps = 1e-7);

} // namespace moef
