#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "contivae/rng.hpp"
#include "contivae/tensor.hpp"

namespace contivae {

/// Weight + bias pair. Weights are Glorot-uniform in
/// [-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))], biases zero.
struct Linear {
    TensorPtr w, b;

    static Linear init(std::size_t in, std::size_t out, Rng& rng) {
        Linear l;
        l.w = Tensor::zeros(in, out, true);
        l.b = Tensor::zeros(1, out, true);
        const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
        for (double& v : l.w->values) v = rng.uniform(-bound, bound);
        return l;
    }

    TensorPtr operator()(Tape& tape, const TensorPtr& x) const {
        return linear(tape, x, w, b);
    }

    std::size_t param_count() const { return w->size() + b->size(); }
};

/// Stack of Linear+ELU hidden layers mapping `in` to `width`.
struct Mlp {
    std::vector<Linear> layers;

    static Mlp init(std::size_t in, std::size_t width, std::size_t depth, Rng& rng) {
        Mlp m;
        std::size_t d = in;
        for (std::size_t i = 0; i < depth; ++i) {
            m.layers.push_back(Linear::init(d, width, rng));
            d = width;
        }
        return m;
    }

    TensorPtr operator()(Tape& tape, TensorPtr x) const {
        for (const auto& l : layers) x = elu(tape, l(tape, x));
        return x;
    }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.param_count();
        return n;
    }
};

/// Flat name -> tensor map in registration order; the order fixes both the
/// Adam moment layout and the checkpoint key order.
class ParamRegistry {
   public:
    void add(const std::string& name, const TensorPtr& t) {
        entries_.emplace_back(name, t);
        flat_.push_back(t);
    }

    void add(const std::string& prefix, const Linear& l) {
        add(prefix + ".W", l.w);
        add(prefix + ".b", l.b);
    }

    void add(const std::string& prefix, const Mlp& m) {
        for (std::size_t i = 0; i < m.layers.size(); ++i)
            add(prefix + ".L" + std::to_string(i), m.layers[i]);
    }

    const std::vector<std::pair<std::string, TensorPtr>>& named() const { return entries_; }
    const std::vector<TensorPtr>& tensors() const { return flat_; }

    std::size_t total_size() const {
        std::size_t n = 0;
        for (const auto& t : flat_) n += t->size();
        return n;
    }

   private:
    std::vector<std::pair<std::string, TensorPtr>> entries_;
    std::vector<TensorPtr> flat_;
};

/// Minibatch driver shared by every trainable model here: reshuffles the
/// index set each epoch and hands out contiguous slices.
/// step(epoch, indices_for_batch) runs one optimization step.
template <class StepFn>
void for_each_minibatch(std::size_t n, std::size_t epochs, std::size_t batch_size,
                        Rng& shuffle_rng, StepFn step) {
    if (n == 0) throw contract_error("for_each_minibatch: empty training set");
    if (batch_size == 0) throw validation_error("batch_size must be positive");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t e = 0; e < epochs; ++e) {
        shuffle_rng.shuffle(order);
        for (std::size_t start = 0; start < n; start += batch_size) {
            const std::size_t stop = std::min(start + batch_size, n);
            step(e, std::span<const std::size_t>(order.data() + start, stop - start));
        }
    }
}

}  // namespace contivae
