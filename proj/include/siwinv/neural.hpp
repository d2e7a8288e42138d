#pragma once
// Dense-network engine: seeded init, forward/backward with inverted dropout,
// Adam, early stopping, finite-difference verification, and checksummed
// checkpoints. Templated on the scalar so training runs in 32-bit while
// gradient verification runs in 64-bit.
//
// Determinism contract: every result is byte-identical for any matmul thread
// count. The kernels below assign each output row to exactly one thread and
// accumulate over the inner dimension in a fixed serial order, so threading
// changes scheduling, never arithmetic.

#include "siwinv/rng.hpp"
#include "siwinv/sha256.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace siwinv {

enum class Activation { relu, leaky_relu, linear };

inline const char* activation_name(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::leaky_relu: return "leaky_relu";
        default: return "linear";
    }
}

inline Activation activation_from_name(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "leaky_relu") return Activation::leaky_relu;
    if (s == "linear") return Activation::linear;
    throw std::runtime_error("unknown activation: " + s);
}

struct LayerSpec {
    int in_dim = 0;
    int out_dim = 0;
    Activation activation = Activation::relu;
    double leaky_slope = 0.01;
    double dropout_after = 0.0; // inverted dropout rate on this layer's output
};

namespace detail {

// C[r,:] += sum_k A(r,k) * B[k,:] with A(r,k) = a[r*ars + k*aks].
// B and C are dense row-major (inner x cols) and (rows x cols).
template <typename Scalar>
void row_accumulate(int rows, int cols, int inner, const Scalar* a, std::ptrdiff_t ars,
                    std::ptrdiff_t aks, const Scalar* b, Scalar* c, int threads) {
    auto run = [=](int r0, int r1) {
        for (int r = r0; r < r1; ++r) {
            Scalar* crow = c + static_cast<std::ptrdiff_t>(r) * cols;
            const Scalar* arow = a + r * ars;
            for (int k = 0; k < inner; ++k) {
                Scalar av = arow[k * aks];
                const Scalar* brow = b + static_cast<std::ptrdiff_t>(k) * cols;
                for (int j = 0; j < cols; ++j) crow[j] += av * brow[j];
            }
        }
    };
    const double flops = 2.0 * rows * cols * inner;
    if (threads <= 1 || rows < 2 || flops < 1e6) {
        run(0, rows);
        return;
    }
    threads = std::min(threads, rows);
    std::vector<std::thread> pool;
    pool.reserve(threads);
    int chunk = (rows + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
        int r0 = t * chunk;
        int r1 = std::min(rows, r0 + chunk);
        if (r0 >= r1) break;
        pool.emplace_back(run, r0, r1);
    }
    for (auto& th : pool) th.join();
}

} // namespace detail

template <typename Scalar>
struct Mlp {
    std::vector<LayerSpec> layers;
    std::vector<std::vector<Scalar>> w;  // per layer, row-major (out, in)
    std::vector<std::vector<Scalar>> wt; // transposed copy (in, out) for forward
    std::vector<std::vector<Scalar>> b;
    int matmul_threads = 1;

    int input_dim() const { return layers.front().in_dim; }
    int output_dim() const { return layers.back().out_dim; }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (std::size_t l = 0; l < layers.size(); ++l) n += w[l].size() + b[l].size();
        return n;
    }

    void sync_transposed(std::size_t l) {
        const int in = layers[l].in_dim, out = layers[l].out_dim;
        for (int o = 0; o < out; ++o)
            for (int i = 0; i < in; ++i) wt[l][static_cast<std::size_t>(i) * out + o] = w[l][static_cast<std::size_t>(o) * in + i];
    }
};

// Weights ~ uniform(-sqrt(6/in_dim), +sqrt(6/in_dim)) drawn layer by layer in
// row-major order from one seeded stream; biases zero.
template <typename Scalar>
Mlp<Scalar> init_model(const std::vector<LayerSpec>& specs, std::uint64_t seed) {
    if (specs.empty()) throw std::runtime_error("init_model: empty layer list");
    for (std::size_t l = 0; l + 1 < specs.size(); ++l)
        if (specs[l].out_dim != specs[l + 1].in_dim)
            throw std::runtime_error("init_model: layer dimension chain mismatch");
    if (specs.back().dropout_after != 0.0)
        throw std::runtime_error("init_model: dropout after the output layer is not allowed");
    for (const auto& s : specs) {
        if (s.in_dim < 1 || s.out_dim < 1) throw std::runtime_error("init_model: dims must be >= 1");
        if (s.dropout_after < 0.0 || s.dropout_after >= 1.0)
            throw std::runtime_error("init_model: dropout rate must be in [0,1)");
    }

    Mlp<Scalar> m;
    m.layers = specs;
    Rng rng(seed);
    for (const auto& s : specs) {
        double bound = std::sqrt(6.0 / s.in_dim);
        std::vector<Scalar> wl(static_cast<std::size_t>(s.out_dim) * s.in_dim);
        for (auto& v : wl) v = static_cast<Scalar>(rng.uniform(-bound, bound));
        m.w.push_back(std::move(wl));
        m.wt.emplace_back(static_cast<std::size_t>(s.out_dim) * s.in_dim);
        m.b.emplace_back(s.out_dim, Scalar(0));
        m.sync_transposed(m.w.size() - 1);
    }
    return m;
}

// Per-batch activations cached for the backward pass. acts[0] is the input;
// acts[l+1] is layer l's output after activation and (train mode) dropout.
template <typename Scalar>
struct ForwardCache {
    int batch = 0;
    std::vector<std::vector<Scalar>> acts;
    std::vector<std::vector<Scalar>> preacts;
    std::vector<std::vector<Scalar>> masks; // scaled keep masks; empty if no dropout
};

template <typename Scalar>
void apply_activation(const LayerSpec& s, std::vector<Scalar>& z, std::vector<Scalar>& a) {
    a.resize(z.size());
    switch (s.activation) {
        case Activation::relu:
            for (std::size_t i = 0; i < z.size(); ++i) a[i] = z[i] > Scalar(0) ? z[i] : Scalar(0);
            break;
        case Activation::leaky_relu: {
            Scalar slope = static_cast<Scalar>(s.leaky_slope);
            for (std::size_t i = 0; i < z.size(); ++i) a[i] = z[i] > Scalar(0) ? z[i] : slope * z[i];
            break;
        }
        case Activation::linear:
            a = z;
            break;
    }
}

// Eval-mode forward: dropout is identity.
template <typename Scalar>
std::vector<Scalar> forward(const Mlp<Scalar>& m, const Scalar* x, int batch) {
    std::vector<Scalar> cur(x, x + static_cast<std::size_t>(batch) * m.input_dim());
    std::vector<Scalar> z, a;
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const auto& s = m.layers[l];
        z.assign(static_cast<std::size_t>(batch) * s.out_dim, Scalar(0));
        for (int r = 0; r < batch; ++r)
            std::memcpy(z.data() + static_cast<std::size_t>(r) * s.out_dim, m.b[l].data(),
                        sizeof(Scalar) * s.out_dim);
        detail::row_accumulate(batch, s.out_dim, s.in_dim, cur.data(), s.in_dim, 1,
                               m.wt[l].data(), z.data(), m.matmul_threads);
        apply_activation(s, z, a);
        cur.swap(a);
    }
    return cur;
}

// Train-mode forward: draws inverted-dropout masks from rng in row-major
// order per flagged layer (keep with probability 1-rate, kept units scaled
// by 1/(1-rate)) and caches everything backward() needs.
template <typename Scalar>
std::vector<Scalar> forward_train(const Mlp<Scalar>& m, const Scalar* x, int batch, Rng& rng,
                                  ForwardCache<Scalar>& cache) {
    cache.batch = batch;
    cache.acts.assign(m.layers.size() + 1, {});
    cache.preacts.assign(m.layers.size(), {});
    cache.masks.assign(m.layers.size(), {});
    cache.acts[0].assign(x, x + static_cast<std::size_t>(batch) * m.input_dim());

    std::vector<Scalar> z, a;
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const auto& s = m.layers[l];
        z.assign(static_cast<std::size_t>(batch) * s.out_dim, Scalar(0));
        for (int r = 0; r < batch; ++r)
            std::memcpy(z.data() + static_cast<std::size_t>(r) * s.out_dim, m.b[l].data(),
                        sizeof(Scalar) * s.out_dim);
        detail::row_accumulate(batch, s.out_dim, s.in_dim, cache.acts[l].data(), s.in_dim, 1,
                               m.wt[l].data(), z.data(), m.matmul_threads);
        cache.preacts[l] = z;
        apply_activation(s, z, a);
        if (s.dropout_after > 0.0) {
            Scalar scale = static_cast<Scalar>(1.0 / (1.0 - s.dropout_after));
            auto& mask = cache.masks[l];
            mask.resize(a.size());
            for (std::size_t i = 0; i < a.size(); ++i) {
                mask[i] = rng.uniform01() >= s.dropout_after ? scale : Scalar(0);
                a[i] *= mask[i];
            }
        }
        cache.acts[l + 1] = a;
    }
    return cache.acts.back();
}

template <typename Scalar>
struct Gradients {
    std::vector<std::vector<Scalar>> w;
    std::vector<std::vector<Scalar>> b;
};

// Batch-mean MSE over all outputs: L = sum((out - y)^2) / (batch * out_dim).
template <typename Scalar>
double mse_loss(const std::vector<Scalar>& out, const Scalar* y, int batch, int dim) {
    double acc = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        double d = static_cast<double>(out[i]) - static_cast<double>(y[i]);
        acc += d * d;
    }
    return acc / (static_cast<double>(batch) * dim);
}

// Reverse accumulation of the batch-mean MSE gradient, reusing the forward
// cache (dropout masks included).
template <typename Scalar>
Gradients<Scalar> backward(const Mlp<Scalar>& m, const ForwardCache<Scalar>& cache, const Scalar* y) {
    const int batch = cache.batch;
    const int out_dim = m.output_dim();
    if (cache.acts.empty()) throw std::runtime_error("backward: missing forward cache");

    Gradients<Scalar> g;
    g.w.resize(m.layers.size());
    g.b.resize(m.layers.size());

    const auto& out = cache.acts.back();
    std::vector<Scalar> delta(out.size());
    Scalar norm = static_cast<Scalar>(2.0 / (static_cast<double>(batch) * out_dim));
    for (std::size_t i = 0; i < out.size(); ++i) delta[i] = norm * (out[i] - y[i]);

    std::vector<Scalar> prev;
    for (int l = static_cast<int>(m.layers.size()) - 1; l >= 0; --l) {
        const auto& s = m.layers[l];
        if (!cache.masks[l].empty())
            for (std::size_t i = 0; i < delta.size(); ++i) delta[i] *= cache.masks[l][i];

        const auto& z = cache.preacts[l];
        switch (s.activation) {
            case Activation::relu:
                for (std::size_t i = 0; i < delta.size(); ++i)
                    if (!(z[i] > Scalar(0))) delta[i] = Scalar(0);
                break;
            case Activation::leaky_relu: {
                Scalar slope = static_cast<Scalar>(s.leaky_slope);
                for (std::size_t i = 0; i < delta.size(); ++i)
                    if (!(z[i] > Scalar(0))) delta[i] *= slope;
                break;
            }
            case Activation::linear:
                break;
        }

        g.b[l].assign(s.out_dim, Scalar(0));
        for (int r = 0; r < batch; ++r) {
            const Scalar* drow = delta.data() + static_cast<std::size_t>(r) * s.out_dim;
            for (int o = 0; o < s.out_dim; ++o) g.b[l][o] += drow[o];
        }

        g.w[l].assign(static_cast<std::size_t>(s.out_dim) * s.in_dim, Scalar(0));
        // dW(out,in) = delta^T (out,batch) . acts[l] (batch,in)
        detail::row_accumulate(s.out_dim, s.in_dim, batch, delta.data(), 1, s.out_dim,
                               cache.acts[l].data(), g.w[l].data(), m.matmul_threads);

        if (l > 0) {
            prev.assign(static_cast<std::size_t>(batch) * s.in_dim, Scalar(0));
            // dX(batch,in) = delta (batch,out) . W (out,in)
            detail::row_accumulate(batch, s.in_dim, s.out_dim, delta.data(), s.out_dim, 1,
                                   m.w[l].data(), prev.data(), m.matmul_threads);
            delta.swap(prev);
        }
    }
    return g;
}

template <typename Scalar>
struct AdamState {
    std::vector<std::vector<Scalar>> m_w, v_w, m_b, v_b;
    std::int64_t step_count = 0;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

template <typename Scalar>
AdamState<Scalar> init_adam(const Mlp<Scalar>& m, double lr = 1e-3, double beta1 = 0.9,
                            double beta2 = 0.999, double epsilon = 1e-8) {
    AdamState<Scalar> st;
    st.learning_rate = lr;
    st.beta1 = beta1;
    st.beta2 = beta2;
    st.epsilon = epsilon;
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        st.m_w.emplace_back(m.w[l].size(), Scalar(0));
        st.v_w.emplace_back(m.w[l].size(), Scalar(0));
        st.m_b.emplace_back(m.b[l].size(), Scalar(0));
        st.v_b.emplace_back(m.b[l].size(), Scalar(0));
    }
    return st;
}

template <typename Scalar>
void adam_step(Mlp<Scalar>& model, const Gradients<Scalar>& g, AdamState<Scalar>& st) {
    st.step_count += 1;
    const Scalar b1 = static_cast<Scalar>(st.beta1);
    const Scalar b2 = static_cast<Scalar>(st.beta2);
    const Scalar lr = static_cast<Scalar>(st.learning_rate);
    const Scalar eps = static_cast<Scalar>(st.epsilon);
    const Scalar bc1 = static_cast<Scalar>(1.0 - std::pow(st.beta1, static_cast<double>(st.step_count)));
    const Scalar bc2 = static_cast<Scalar>(1.0 - std::pow(st.beta2, static_cast<double>(st.step_count)));

    auto update = [&](std::vector<Scalar>& p, std::vector<Scalar>& mm, std::vector<Scalar>& vv,
                      const std::vector<Scalar>& gr, const char* what) {
        Scalar check = Scalar(0);
        for (std::size_t i = 0; i < p.size(); ++i) {
            Scalar gi = gr[i];
            check += gi;
            mm[i] = b1 * mm[i] + (Scalar(1) - b1) * gi;
            vv[i] = b2 * vv[i] + (Scalar(1) - b2) * gi * gi;
            Scalar mhat = mm[i] / bc1;
            Scalar vhat = vv[i] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
        if (!std::isfinite(static_cast<double>(check)))
            throw std::runtime_error(std::string("adam_step: non-finite gradient in ") + what);
    };

    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        update(model.w[l], st.m_w[l], st.v_w[l], g.w[l], "weights");
        update(model.b[l], st.m_b[l], st.v_b[l], g.b[l], "biases");
        model.sync_transposed(l);
    }
}

// Eval-mode MSE/MAE, averaged over samples and output dims. Accumulation
// order is fixed (ascending sample index) regardless of chunking.
template <typename Scalar>
std::pair<double, double> evaluate(const Mlp<Scalar>& m, const Scalar* x, const Scalar* y, int count) {
    const int in = m.input_dim(), out = m.output_dim();
    double se = 0.0, ae = 0.0;
    const int chunk = 512;
    for (int start = 0; start < count; start += chunk) {
        int n = std::min(chunk, count - start);
        auto pred = forward(m, x + static_cast<std::size_t>(start) * in, n);
        const Scalar* yrow = y + static_cast<std::size_t>(start) * out;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            double d = static_cast<double>(pred[i]) - static_cast<double>(yrow[i]);
            se += d * d;
            ae += std::abs(d);
        }
    }
    double denom = static_cast<double>(count) * out;
    return {se / denom, ae / denom};
}

struct TrainConfig {
    int batch_size = 128;
    int max_epochs = 200;
    bool early_stopping = true;
    int patience = 20;
    double min_delta = 1e-6;
    std::uint64_t seed = 0;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct TrainRecord {
    std::vector<double> train_mse, val_mse, train_mae, val_mae;
    int best_epoch = 0;    // 1-based
    int stopped_epoch = 0; // epochs actually run
};

// Patience counter on validation loss. An epoch improves only if it beats the
// best seen so far by more than min_delta; observe() returns true when
// training should halt after the observed epoch.
struct EarlyStopper {
    bool enabled = true;
    int patience = 20;
    double min_delta = 1e-6;
    double best = std::numeric_limits<double>::infinity();
    int best_epoch = 0;
    int stale = 0;

    bool observe(int epoch, double val_loss) {
        if (!enabled) {
            best_epoch = epoch;
            return false;
        }
        if (val_loss < best - min_delta) {
            best = val_loss;
            best_epoch = epoch;
            stale = 0;
            return false;
        }
        return ++stale >= patience;
    }
};

inline void write_train_record_csv(const TrainRecord& r, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write train record: " + path.string());
    out << "epoch,train_mse,val_mse,train_mae,val_mae\n";
    out.precision(12);
    for (std::size_t i = 0; i < r.train_mse.size(); ++i)
        out << (i + 1) << "," << r.train_mse[i] << "," << r.val_mse[i] << "," << r.train_mae[i]
            << "," << r.val_mae[i] << "\n";
}

// Mini-batch training with seeded epoch shuffles and early stopping on
// validation MSE (restore-best). Train metrics are the running batch means
// observed during the epoch (train mode, dropout active); validation metrics
// are full eval-mode passes.
template <typename Scalar>
TrainRecord train(Mlp<Scalar>& model, AdamState<Scalar>& adam, const std::vector<Scalar>& x_train,
                  const std::vector<Scalar>& y_train, const std::vector<Scalar>& x_val,
                  const std::vector<Scalar>& y_val, const TrainConfig& cfg) {
    const int in = model.input_dim(), out = model.output_dim();
    const int n_train = static_cast<int>(x_train.size()) / in;
    const int n_val = static_cast<int>(x_val.size()) / in;
    if (n_train == 0 || n_val == 0) throw std::runtime_error("train: empty split");
    if (static_cast<int>(y_train.size()) / out != n_train)
        throw std::runtime_error("train: feature/target row mismatch");

    Rng rng(cfg.seed);
    TrainRecord rec;
    EarlyStopper stopper{cfg.early_stopping, cfg.patience, cfg.min_delta};
    std::vector<std::vector<Scalar>> best_w = model.w, best_b = model.b;

    std::vector<int> order(n_train);
    for (int i = 0; i < n_train; ++i) order[i] = i;
    std::vector<Scalar> bx, by;
    ForwardCache<Scalar> cache;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_se = 0.0, epoch_ae = 0.0;
        std::int64_t epoch_terms = 0;

        for (int start = 0; start < n_train; start += cfg.batch_size) {
            int bsz = std::min(cfg.batch_size, n_train - start);
            bx.resize(static_cast<std::size_t>(bsz) * in);
            by.resize(static_cast<std::size_t>(bsz) * out);
            for (int r = 0; r < bsz; ++r) {
                int src = order[start + r];
                std::memcpy(bx.data() + static_cast<std::size_t>(r) * in,
                            x_train.data() + static_cast<std::size_t>(src) * in, sizeof(Scalar) * in);
                std::memcpy(by.data() + static_cast<std::size_t>(r) * out,
                            y_train.data() + static_cast<std::size_t>(src) * out, sizeof(Scalar) * out);
            }
            auto pred = forward_train(model, bx.data(), bsz, rng, cache);
            double batch_se = 0.0, batch_ae = 0.0;
            for (std::size_t i = 0; i < pred.size(); ++i) {
                double d = static_cast<double>(pred[i]) - static_cast<double>(by[i]);
                batch_se += d * d;
                batch_ae += std::abs(d);
            }
            if (!std::isfinite(batch_se))
                throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) +
                                         ", batch offset " + std::to_string(start));
            epoch_se += batch_se;
            epoch_ae += batch_ae;
            epoch_terms += static_cast<std::int64_t>(pred.size());

            auto grads = backward(model, cache, by.data());
            adam_step(model, grads, adam);
        }

        rec.train_mse.push_back(epoch_se / epoch_terms);
        rec.train_mae.push_back(epoch_ae / epoch_terms);
        auto [vmse, vmae] = evaluate(model, x_val.data(), y_val.data(), n_val);
        rec.val_mse.push_back(vmse);
        rec.val_mae.push_back(vmae);
        rec.stopped_epoch = epoch;

        bool halt = stopper.observe(epoch, vmse);
        if (cfg.early_stopping && stopper.best_epoch == epoch) {
            best_w = model.w;
            best_b = model.b;
        }
        rec.best_epoch = stopper.best_epoch;
        if (halt) break;
    }

    if (cfg.early_stopping && rec.best_epoch > 0) {
        model.w = best_w;
        model.b = best_b;
        for (std::size_t l = 0; l < model.layers.size(); ++l) model.sync_transposed(l);
    }
    return rec;
}

// Central-difference verification of backward(). Requires a dropout-free
// model; intended for small 64-bit instantiations.
template <typename Scalar>
double gradient_check(Mlp<Scalar>& model, const std::vector<Scalar>& x, const std::vector<Scalar>& y,
                      double epsilon = 1e-5) {
    for (const auto& s : model.layers)
        if (s.dropout_after != 0.0)
            throw std::runtime_error("gradient_check: requires a dropout-free model");
    const int batch = static_cast<int>(x.size()) / model.input_dim();

    Rng rng(0); // unused (no dropout), but forward_train needs one
    ForwardCache<Scalar> cache;
    forward_train(model, x.data(), batch, rng, cache);
    auto analytic = backward(model, cache, y.data());

    auto loss_at = [&]() {
        auto pred = forward(model, x.data(), batch);
        return mse_loss(pred, y.data(), batch, model.output_dim());
    };

    double worst = 0.0;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        auto probe = [&](std::vector<Scalar>& params, const std::vector<Scalar>& grad, bool is_weight) {
            for (std::size_t i = 0; i < params.size(); ++i) {
                Scalar saved = params[i];
                params[i] = saved + static_cast<Scalar>(epsilon);
                if (is_weight) model.sync_transposed(l);
                double lp = loss_at();
                params[i] = saved - static_cast<Scalar>(epsilon);
                if (is_weight) model.sync_transposed(l);
                double lm = loss_at();
                params[i] = saved;
                if (is_weight) model.sync_transposed(l);
                double numeric = (lp - lm) / (2.0 * epsilon);
                double ana = static_cast<double>(grad[i]);
                double rel = std::abs(numeric - ana) / std::max(std::abs(numeric) + std::abs(ana), 1e-12);
                worst = std::max(worst, rel);
            }
        };
        probe(model.w[l], analytic.w[l], true);
        probe(model.b[l], analytic.b[l], false);
    }
    return worst;
}

// ---- checkpoint persistence ----
// Single file: one JSON header line, then raw little-endian 32-bit blobs
// (per layer weights then biases; optionally Adam moments).

struct CheckpointInfo {
    std::vector<LayerSpec> layers;
    std::uint64_t seed = 0;
    std::string dataset_checksum;
    bool has_adam_state = false;
    std::vector<std::string> warnings;
};

namespace detail {

inline void append_f32(std::string& blob, const std::vector<float>& v) {
    blob.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float));
}

inline void read_f32(const char*& p, const char* end, std::vector<float>& v) {
    std::size_t bytes = v.size() * sizeof(float);
    if (p + bytes > end) throw std::runtime_error("integrity: truncated checkpoint blob");
    std::memcpy(v.data(), p, bytes);
    p += bytes;
}

} // namespace detail

inline void save_checkpoint(const Mlp<float>& model, const AdamState<float>* adam,
                            const std::filesystem::path& path, std::uint64_t seed,
                            const std::string& dataset_checksum,
                            const nlohmann::json& train_config_echo = {}) {
    std::string blob;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        detail::append_f32(blob, model.w[l]);
        detail::append_f32(blob, model.b[l]);
    }
    if (adam) {
        for (std::size_t l = 0; l < model.layers.size(); ++l) {
            detail::append_f32(blob, adam->m_w[l]);
            detail::append_f32(blob, adam->v_w[l]);
            detail::append_f32(blob, adam->m_b[l]);
            detail::append_f32(blob, adam->v_b[l]);
        }
    }

    nlohmann::json header;
    header["format_version"] = 1;
    header["rng_algorithm"] = kRngAlgorithm;
    header["seed"] = seed;
    header["dataset_checksum"] = dataset_checksum;
    nlohmann::json jlayers = nlohmann::json::array();
    for (const auto& s : model.layers)
        jlayers.push_back({{"in_dim", s.in_dim},
                           {"out_dim", s.out_dim},
                           {"activation", activation_name(s.activation)},
                           {"leaky_slope", s.leaky_slope},
                           {"dropout_after", s.dropout_after}});
    header["layers"] = jlayers;
    header["blob_bytes"] = blob.size();
    header["blob_sha256"] = sha256_hex(blob.data(), blob.size());
    header["has_adam_state"] = adam != nullptr;
    if (adam)
        header["adam"] = {{"step_count", adam->step_count},
                          {"learning_rate", adam->learning_rate},
                          {"beta1", adam->beta1},
                          {"beta2", adam->beta2},
                          {"epsilon", adam->epsilon}};
    if (!train_config_echo.is_null() && !train_config_echo.empty())
        header["train_config"] = train_config_echo;

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
    out << header.dump() << "\n";
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw std::runtime_error("short checkpoint write: " + path.string());
}

inline Mlp<float> load_checkpoint(const std::filesystem::path& path, AdamState<float>* adam_out,
                                  CheckpointInfo& info, const std::string& expect_dataset_checksum = "") {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
    std::string header_line;
    if (!std::getline(in, header_line))
        throw std::runtime_error("integrity: missing checkpoint header");
    nlohmann::json header = nlohmann::json::parse(header_line);
    if (header.at("format_version").get<int>() != 1)
        throw std::runtime_error("version-mismatch: unsupported checkpoint format_version");

    info = CheckpointInfo{};
    info.seed = header.at("seed").get<std::uint64_t>();
    info.dataset_checksum = header.at("dataset_checksum").get<std::string>();
    info.has_adam_state = header.at("has_adam_state").get<bool>();
    for (const auto& j : header.at("layers")) {
        LayerSpec s;
        s.in_dim = j.at("in_dim").get<int>();
        s.out_dim = j.at("out_dim").get<int>();
        s.activation = activation_from_name(j.at("activation").get<std::string>());
        s.leaky_slope = j.at("leaky_slope").get<double>();
        s.dropout_after = j.at("dropout_after").get<double>();
        info.layers.push_back(s);
    }

    std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (blob.size() != header.at("blob_bytes").get<std::size_t>())
        throw std::runtime_error("integrity: checkpoint blob size mismatch");
    if (sha256_hex(blob.data(), blob.size()) != header.at("blob_sha256").get<std::string>())
        throw std::runtime_error("integrity: checkpoint checksum mismatch");

    Mlp<float> model;
    model.layers = info.layers;
    const char* p = blob.data();
    const char* end = blob.data() + blob.size();
    for (const auto& s : model.layers) {
        std::vector<float> wl(static_cast<std::size_t>(s.out_dim) * s.in_dim);
        std::vector<float> bl(s.out_dim);
        detail::read_f32(p, end, wl);
        detail::read_f32(p, end, bl);
        model.w.push_back(std::move(wl));
        model.b.push_back(std::move(bl));
        model.wt.emplace_back(static_cast<std::size_t>(s.out_dim) * s.in_dim);
        model.sync_transposed(model.w.size() - 1);
    }
    if (info.has_adam_state && adam_out) {
        *adam_out = init_adam(model);
        const auto& ja = header.at("adam");
        adam_out->step_count = ja.at("step_count").get<std::int64_t>();
        adam_out->learning_rate = ja.at("learning_rate").get<double>();
        adam_out->beta1 = ja.at("beta1").get<double>();
        adam_out->beta2 = ja.at("beta2").get<double>();
        adam_out->epsilon = ja.at("epsilon").get<double>();
        for (std::size_t l = 0; l < model.layers.size(); ++l) {
            detail::read_f32(p, end, adam_out->m_w[l]);
            detail::read_f32(p, end, adam_out->v_w[l]);
            detail::read_f32(p, end, adam_out->m_b[l]);
            detail::read_f32(p, end, adam_out->v_b[l]);
        }
    }
    if (!expect_dataset_checksum.empty() && info.dataset_checksum != expect_dataset_checksum)
        info.warnings.push_back("checkpoint was trained on a different dataset (checksum mismatch)");
    return model;
}

} // namespace siwinv
