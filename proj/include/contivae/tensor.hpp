#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "contivae/common.hpp"

namespace contivae {

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

/// Dense row-major 2-D tensor (vectors are 1 x n). Gradients accumulate
/// with += so values shared between subexpressions combine naturally.
class Tensor {
   public:
    Tensor(std::size_t rows, std::size_t cols, bool requires_grad)
        : rows_(rows), cols_(cols), values(rows * cols, 0.0), requires_grad(requires_grad) {
        if (requires_grad) grad.assign(values.size(), 0.0);
    }

    static TensorPtr zeros(std::size_t rows, std::size_t cols, bool requires_grad = false) {
        return std::make_shared<Tensor>(rows, cols, requires_grad);
    }

    static TensorPtr scalar(double v, bool requires_grad = false) {
        auto t = zeros(1, 1, requires_grad);
        t->values[0] = v;
        return t;
    }

    /// 1 x n row vector.
    static TensorPtr row(std::vector<double> v, bool requires_grad = false) {
        auto t = std::make_shared<Tensor>(1, v.size(), requires_grad);
        t->values = std::move(v);
        return t;
    }

    static TensorPtr matrix(std::size_t rows, std::size_t cols, std::vector<double> v,
                            bool requires_grad = false) {
        if (v.size() != rows * cols)
            throw dim_error("Tensor::matrix: " + std::to_string(v.size()) +
                            " values for shape [" + std::to_string(rows) + " x " +
                            std::to_string(cols) + "]");
        auto t = std::make_shared<Tensor>(rows, cols, requires_grad);
        t->values = std::move(v);
        return t;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return values.size(); }
    bool is_scalar() const { return size() == 1; }

    double value() const {
        if (!is_scalar()) throw contract_error("Tensor::value: not a scalar, " + shape_str());
        return values[0];
    }

    double at(std::size_t r, std::size_t c) const { return values[r * cols_ + c]; }
    double& at(std::size_t r, std::size_t c) { return values[r * cols_ + c]; }

    void zero_grad() {
        if (requires_grad) grad.assign(values.size(), 0.0);
    }

    std::string shape_str() const {
        return "[" + std::to_string(rows_) + " x " + std::to_string(cols_) + "]";
    }

    std::size_t rows_, cols_;
    std::vector<double> values;
    std::vector<double> grad;  // sized iff requires_grad
    bool requires_grad = false;
};

/// Records executed differentiable operations in order. backward() replays
/// them in exact reverse order; a tape can be consumed only once. A tape
/// and its tensors belong to a single thread.
class Tape {
   public:
    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    bool grad_enabled() const { return grad_enabled_; }
    bool consumed() const { return consumed_; }
    std::size_t recorded() const { return steps_.size(); }

    void record(std::function<void()> fn) { steps_.push_back(std::move(fn)); }

    void backward(const TensorPtr& loss) {
        if (!loss->is_scalar())
            throw contract_error("backward: loss must be scalar, got " + loss->shape_str());
        if (consumed_) throw contract_error("backward: tape already consumed");
        consumed_ = true;
        if (loss->requires_grad) loss->grad[0] += 1.0;
        for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
    }

   private:
    std::vector<std::function<void()>> steps_;
    bool grad_enabled_ = true;
    bool consumed_ = false;
};

inline void backward(Tape& tape, const TensorPtr& loss) { tape.backward(loss); }

inline void zero_grad(const std::vector<TensorPtr>& params) {
    for (const auto& p : params) p->zero_grad();
}

namespace detail {

inline bool same_shape(const Tensor& a, const Tensor& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_;
}

inline TensorPtr result_like(Tape& tape, std::size_t rows, std::size_t cols, bool any_grad) {
    return Tensor::zeros(rows, cols, tape.grad_enabled() && any_grad);
}

/// Elementwise binary op with scalar (1x1) broadcast on either side.
/// f(a,b) is the value; da/db give the partials at (a,b).
template <class F, class DA, class DB>
TensorPtr binary_op(Tape& tape, const TensorPtr& a, const TensorPtr& b, F f, DA da, DB db,
                    const char* name) {
    const bool sa = a->is_scalar();
    const bool sb = b->is_scalar();
    if (!sa && !sb && !same_shape(*a, *b))
        throw dim_error(std::string(name) + ": shape mismatch " + a->shape_str() + " vs " +
                        b->shape_str());
    const Tensor& shape_src = sa && !sb ? *b : *a;
    auto out = result_like(tape, shape_src.rows_, shape_src.cols_,
                           a->requires_grad || b->requires_grad);
    const std::size_t n = out->size();
    for (std::size_t i = 0; i < n; ++i)
        out->values[i] = f(a->values[sa ? 0 : i], b->values[sb ? 0 : i]);
    if (out->requires_grad) {
        tape.record([a, b, out, da, db, sa, sb, n] {
            for (std::size_t i = 0; i < n; ++i) {
                const double av = a->values[sa ? 0 : i];
                const double bv = b->values[sb ? 0 : i];
                const double g = out->grad[i];
                if (a->requires_grad) a->grad[sa ? 0 : i] += da(av, bv) * g;
                if (b->requires_grad) b->grad[sb ? 0 : i] += db(av, bv) * g;
            }
        });
    }
    return out;
}

/// Elementwise unary op. d(x, y) is the partial given input x and output y.
template <class F, class D>
TensorPtr unary_op(Tape& tape, const TensorPtr& a, F f, D d) {
    auto out = result_like(tape, a->rows_, a->cols_, a->requires_grad);
    const std::size_t n = out->size();
    for (std::size_t i = 0; i < n; ++i) out->values[i] = f(a->values[i]);
    if (out->requires_grad) {
        tape.record([a, out, d, n] {
            for (std::size_t i = 0; i < n; ++i)
                a->grad[i] += d(a->values[i], out->values[i]) * out->grad[i];
        });
    }
    return out;
}

}  // namespace detail

inline TensorPtr add(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
    return detail::binary_op(
        tape, a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; }, "add");
}

inline TensorPtr sub(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
    return detail::binary_op(
        tape, a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; }, "sub");
}

inline TensorPtr mul(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
    return detail::binary_op(
        tape, a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; }, "mul");
}

inline TensorPtr div(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
    return detail::binary_op(
        tape, a, b, [](double x, double y) { return x / y; },
        [](double, double y) { return 1.0 / y; },
        [](double x, double y) { return -x / (y * y); }, "div");
}

inline TensorPtr neg(Tape& tape, const TensorPtr& a) {
    return detail::unary_op(
        tape, a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

inline TensorPtr square(Tape& tape, const TensorPtr& a) {
    return detail::unary_op(
        tape, a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

inline TensorPtr exp(Tape& tape, const TensorPtr& a) {
    return detail::unary_op(
        tape, a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline TensorPtr log(Tape& tape, const TensorPtr& a) {
    for (double v : a->values)
        if (!(v > 0.0))
            throw numeric_error("log: non-positive input " + std::to_string(v));
    return detail::unary_op(
        tape, a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline TensorPtr sqrt(Tape& tape, const TensorPtr& a) {
    for (double v : a->values)
        if (v < 0.0) throw numeric_error("sqrt: negative input " + std::to_string(v));
    return detail::unary_op(
        tape, a, [](double x) { return std::sqrt(x); },
        [](double, double y) { return 0.5 / y; });
}

/// Overflow-safe log(1 + e^x); strictly positive, saturates to x for large x.
inline TensorPtr softplus(Tape& tape, const TensorPtr& a) {
    return detail::unary_op(
        tape, a, [](double x) { return contivae::softplus(x); },
        [](double x, double) { return contivae::sigmoid(x); });
}

inline TensorPtr sigmoid(Tape& tape, const TensorPtr& a) {
    return detail::unary_op(
        tape, a, [](double x) { return contivae::sigmoid(x); },
        [](double, double y) { return y * (1.0 - y); });
}

inline TensorPtr elu(Tape& tape, const TensorPtr& a) {
    return detail::unary_op(
        tape, a, [](double x) { return x > 0.0 ? x : std::expm1(x); },
        [](double x, double y) { return x > 0.0 ? 1.0 : y + 1.0; });
}

inline TensorPtr add_scalar(Tape& tape, const TensorPtr& a, double c) {
    return detail::unary_op(
        tape, a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

inline TensorPtr mul_scalar(Tape& tape, const TensorPtr& a, double c) {
    return detail::unary_op(
        tape, a, [c](double x) { return x * c; }, [c](double, double) { return c; });
}

/// [m x k] . [k x n] -> [m x n]
inline TensorPtr matmul(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
    if (a->cols_ != b->rows_)
        throw dim_error("matmul: inner dimensions disagree, " + a->shape_str() + " vs " +
                        b->shape_str());
    const std::size_t m = a->rows_, k = a->cols_, n = b->cols_;
    auto out = detail::result_like(tape, m, n, a->requires_grad || b->requires_grad);
    const double* av = a->values.data();
    const double* bv = b->values.data();
    double* ov = out->values.data();
#pragma omp parallel for if (m * n * k > 16384)
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double x = av[i * k + p];
            const double* brow = bv + p * n;
            double* orow = ov + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += x * brow[j];
        }
    }
    if (out->requires_grad) {
        tape.record([a, b, out, m, k, n] {
            const double* g = out->grad.data();
            if (a->requires_grad) {
                double* ga = a->grad.data();
                const double* bv = b->values.data();
                // dL/da = dL/dout . b^T
#pragma omp parallel for if (m * n * k > 16384)
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < n; ++j) {
                        const double go = g[i * n + j];
                        const double* brow = bv + j;
                        double* garow = ga + i * k;
                        for (std::size_t p = 0; p < k; ++p) garow[p] += go * brow[p * n];
                    }
                }
            }
            if (b->requires_grad) {
                double* gb = b->grad.data();
                const double* av = a->values.data();
                // dL/db = a^T . dL/dout
#pragma omp parallel for if (m * n * k > 16384)
                for (std::size_t p = 0; p < k; ++p) {
                    for (std::size_t i = 0; i < m; ++i) {
                        const double x = av[i * k + p];
                        const double* grow = g + i * n;
                        double* gbrow = gb + p * n;
                        for (std::size_t j = 0; j < n; ++j) gbrow[j] += x * grow[j];
                    }
                }
            }
        });
    }
    return out;
}

/// x[B x i] . W[i x o] + b[1 x o], bias added to every row.
inline TensorPtr linear(Tape& tape, const TensorPtr& x, const TensorPtr& w, const TensorPtr& b) {
    if (x->cols_ != w->rows_)
        throw dim_error("linear: input/weight mismatch, " + x->shape_str() + " vs " +
                        w->shape_str());
    if (b->rows_ != 1 || b->cols_ != w->cols_)
        throw dim_error("linear: bias shape " + b->shape_str() + " vs weight " + w->shape_str());
    const std::size_t m = x->rows_, k = x->cols_, n = w->cols_;
    auto out = detail::result_like(tape, m, n,
                                   x->requires_grad || w->requires_grad || b->requires_grad);
    const double* xv = x->values.data();
    const double* wv = w->values.data();
    const double* bv = b->values.data();
    double* ov = out->values.data();
#pragma omp parallel for if (m * n * k > 16384)
    for (std::size_t i = 0; i < m; ++i) {
        double* orow = ov + i * n;
        for (std::size_t j = 0; j < n; ++j) orow[j] = bv[j];
        for (std::size_t p = 0; p < k; ++p) {
            const double v = xv[i * k + p];
            const double* wrow = wv + p * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += v * wrow[j];
        }
    }
    if (out->requires_grad) {
        tape.record([x, w, b, out, m, k, n] {
            const double* g = out->grad.data();
            if (x->requires_grad) {
                double* gx = x->grad.data();
                const double* wv = w->values.data();
#pragma omp parallel for if (m * n * k > 16384)
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < n; ++j) {
                        const double go = g[i * n + j];
                        double* gxrow = gx + i * k;
                        const double* wcol = wv + j;
                        for (std::size_t p = 0; p < k; ++p) gxrow[p] += go * wcol[p * n];
                    }
                }
            }
            if (w->requires_grad) {
                double* gw = w->grad.data();
                const double* xv = x->values.data();
#pragma omp parallel for if (m * n * k > 16384)
                for (std::size_t p = 0; p < k; ++p) {
                    for (std::size_t i = 0; i < m; ++i) {
                        const double v = xv[i * k + p];
                        const double* grow = g + i * n;
                        double* gwrow = gw + p * n;
                        for (std::size_t j = 0; j < n; ++j) gwrow[j] += v * grow[j];
                    }
                }
            }
            if (b->requires_grad) {
                double* gb = b->grad.data();
                for (std::size_t i = 0; i < m; ++i) {
                    const double* grow = g + i * n;
                    for (std::size_t j = 0; j < n; ++j) gb[j] += grow[j];
                }
            }
        });
    }
    return out;
}

/// Concatenation along axis 0 (stack rows) or axis 1 (widen rows).
/// The backward pass splits the adjoint back onto the operands.
inline TensorPtr concat(Tape& tape, const TensorPtr& a, const TensorPtr& b, int axis) {
    if (axis != 0 && axis != 1) throw contract_error("concat: axis must be 0 or 1");
    std::size_t rows, cols;
    if (axis == 1) {
        if (a->rows_ != b->rows_)
            throw dim_error("concat axis 1: row counts differ, " + a->shape_str() + " vs " +
                            b->shape_str());
        rows = a->rows_;
        cols = a->cols_ + b->cols_;
    } else {
        if (a->cols_ != b->cols_)
            throw dim_error("concat axis 0: column counts differ, " + a->shape_str() + " vs " +
                            b->shape_str());
        rows = a->rows_ + b->rows_;
        cols = a->cols_;
    }
    auto out = detail::result_like(tape, rows, cols, a->requires_grad || b->requires_grad);
    if (axis == 1) {
        for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t j = 0; j < a->cols_; ++j)
                out->values[i * cols + j] = a->values[i * a->cols_ + j];
            for (std::size_t j = 0; j < b->cols_; ++j)
                out->values[i * cols + a->cols_ + j] = b->values[i * b->cols_ + j];
        }
    } else {
        std::copy(a->values.begin(), a->values.end(), out->values.begin());
        std::copy(b->values.begin(), b->values.end(), out->values.begin() + a->values.size());
    }
    if (out->requires_grad) {
        tape.record([a, b, out, rows, cols, axis] {
            if (axis == 1) {
                for (std::size_t i = 0; i < rows; ++i) {
                    if (a->requires_grad)
                        for (std::size_t j = 0; j < a->cols_; ++j)
                            a->grad[i * a->cols_ + j] += out->grad[i * cols + j];
                    if (b->requires_grad)
                        for (std::size_t j = 0; j < b->cols_; ++j)
                            b->grad[i * b->cols_ + j] += out->grad[i * cols + a->cols_ + j];
                }
            } else {
                if (a->requires_grad)
                    for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += out->grad[i];
                if (b->requires_grad)
                    for (std::size_t i = 0; i < b->grad.size(); ++i)
                        b->grad[i] += out->grad[a->values.size() + i];
            }
        });
    }
    return out;
}

/// [B x d] -> [B x 1], sum along each row.
inline TensorPtr row_sum(Tape& tape, const TensorPtr& a) {
    auto out = detail::result_like(tape, a->rows_, 1, a->requires_grad);
    for (std::size_t i = 0; i < a->rows_; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < a->cols_; ++j) s += a->values[i * a->cols_ + j];
        out->values[i] = s;
    }
    if (out->requires_grad) {
        tape.record([a, out] {
            for (std::size_t i = 0; i < a->rows_; ++i)
                for (std::size_t j = 0; j < a->cols_; ++j)
                    a->grad[i * a->cols_ + j] += out->grad[i];
        });
    }
    return out;
}

/// Sum of all entries -> scalar [1 x 1].
inline TensorPtr sum(Tape& tape, const TensorPtr& a) {
    auto out = detail::result_like(tape, 1, 1, a->requires_grad);
    double s = 0.0;
    for (double v : a->values) s += v;
    out->values[0] = s;
    if (out->requires_grad) {
        tape.record([a, out] {
            for (double& g : a->grad) g += out->grad[0];
        });
    }
    return out;
}

/// Adam with bias correction. Moment buffers are lazily sized on first use.
struct AdamState {
    std::size_t step = 0;
    std::vector<std::vector<double>> m, v;
};

inline void adam_step(const std::vector<TensorPtr>& params, AdamState& state, double lr,
                      double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.m[i].assign(params[i]->size(), 0.0);
            state.v[i].assign(params[i]->size(), 0.0);
        }
    }
    if (state.m.size() != params.size())
        throw contract_error("adam_step: state tracks a different parameter list");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        if (!p.requires_grad) throw contract_error("adam_step: parameter without gradient");
        if (state.m[i].size() != p.size())
            throw contract_error("adam_step: moment buffer shape disagrees with parameter");
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double g = p.grad[j];
            state.m[i][j] = beta1 * state.m[i][j] + (1.0 - beta1) * g;
            state.v[i][j] = beta2 * state.v[i][j] + (1.0 - beta2) * g * g;
            const double mhat = state.m[i][j] / bc1;
            const double vhat = state.v[i][j] / bc2;
            p.values[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

}  // namespace contivae
