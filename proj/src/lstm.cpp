#include "lssa/lstm.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lssa/error.hpp"

namespace lssa {

void ModelConfig::validate() const {
    if (vocab_size < 1 || embed_dim < 1 || hidden_dim < 1 || layers < 1)
        throw ConfigError("model dimensions must be >= 1");
    if (!(dropout_keep > 0.0 && dropout_keep <= 1.0))
        throw ConfigError("dropout_keep must lie in (0, 1]");
}

LstmNet::LstmNet(const ModelConfig& cfg) : config(cfg), embedding(cfg.vocab_size, cfg.embed_dim) {
    cfg.validate();
    const std::size_t g = 4 * cfg.hidden_dim;
    for (std::size_t l = 0; l < cfg.layers; ++l)
        layers.push_back({ParamBlock(g, cfg.input_dim(l)), ParamBlock(g, cfg.hidden_dim), ParamBlock(1, g)});
}

void LstmNet::init_uniform(Rng& rng, double range) {
    for (double& x : embedding.value.data()) x = rng.uniform(-range, range);
    const std::size_t hd = config.hidden_dim;
    for (auto& layer : layers) {
        for (double& x : layer.w.value.data()) x = rng.uniform(-range, range);
        for (double& x : layer.u.value.data()) x = rng.uniform(-range, range);
        auto b = layer.b.value.data();
        std::fill(b.begin(), b.end(), 0.0);
        std::fill(b.begin() + static_cast<std::ptrdiff_t>(hd), b.begin() + static_cast<std::ptrdiff_t>(2 * hd), 1.0);
    }
}

std::vector<NamedParam> LstmNet::params() {
    std::vector<NamedParam> out{{"embedding", &embedding}};
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const std::string p = "lstm." + std::to_string(l) + ".";
        out.push_back({p + "w", &layers[l].w});
        out.push_back({p + "u", &layers[l].u});
        out.push_back({p + "b", &layers[l].b});
    }
    return out;
}

HiddenState HiddenState::zeros(std::size_t layers, std::size_t batch, std::size_t hidden) {
    HiddenState s;
    s.h.assign(layers, Matrix(batch, hidden));
    s.c.assign(layers, Matrix(batch, hidden));
    return s;
}

namespace {

StepInput make_input(const Batch& batch, std::size_t trim) {
    StepInput in;
    in.batch = batch.batch_size;
    in.steps = batch.max_len > trim ? batch.max_len - trim : 0;
    in.ids.assign(in.steps * in.batch, special::kPad);
    for (std::size_t b = 0; b < in.batch; ++b) {
        in.lengths.push_back(batch.lengths[b] - trim);
        for (std::size_t t = 0; t < in.steps; ++t) in.ids[t * in.batch + b] = batch.id(b, t);
    }
    return in;
}

void copy_row(std::span<const double> src, std::span<double> dst) {
    std::copy(src.begin(), src.end(), dst.begin());
}

}  // namespace

StepInput full_input(const Batch& batch) { return make_input(batch, 0); }
StepInput teacher_input(const Batch& batch) { return make_input(batch, 1); }

ForwardCache forward_sequence(const LstmNet& net, const StepInput& input, Rng* dropout_rng,
                              const HiddenState* initial) {
    const ModelConfig& cfg = net.config;
    const std::size_t T = input.steps, B = input.batch, H = cfg.hidden_dim, E = cfg.embed_dim;
    const std::size_t G = 4 * H, rows = T * B;
    if (input.lengths.size() != B || input.ids.size() != rows)
        throw ShapeError("forward_sequence: malformed step input");
    if (initial && (initial->h.size() != cfg.layers || initial->h[0].rows() != B))
        throw ShapeError("forward_sequence: initial state shape mismatch");

    ForwardCache cache;
    cache.input = input;

    Matrix x(rows, E);
    const bool dropout = dropout_rng != nullptr && cfg.dropout_keep < 1.0;
    if (dropout) cache.dropout_scale = Matrix(rows, E);
    const double inv_keep = 1.0 / cfg.dropout_keep;
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t b = 0; b < B; ++b) {
            if (!input.active(t, b)) continue;
            const int id = input.id(t, b);
            if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size)
                throw IndexError("token id " + std::to_string(id) + " outside vocabulary of " +
                                 std::to_string(cfg.vocab_size));
            const std::size_t r = t * B + b;
            auto src = net.embedding.value.row(static_cast<std::size_t>(id));
            auto dst = x.row(r);
            if (dropout) {
                auto sc = cache.dropout_scale.row(r);
                for (std::size_t e = 0; e < E; ++e) {
                    sc[e] = dropout_rng->bernoulli(cfg.dropout_keep) ? inv_keep : 0.0;
                    dst[e] = src[e] * sc[e];
                }
            } else {
                copy_row(src, dst);
            }
        }
    }

    cache.final_state = HiddenState::zeros(cfg.layers, B, H);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        const LstmLayer& layer = net.layers[l];
        const std::size_t in_dim = cfg.input_dim(l);
        LayerCache lc;
        lc.input = std::move(x);
        lc.gates = Matrix(rows, G);
        lc.c = Matrix(rows, H);
        lc.tanh_c = Matrix(rows, H);
        lc.h = Matrix(rows, H);
        lc.h0 = initial ? initial->h[l] : Matrix(B, H);
        lc.c0 = initial ? initial->c[l] : Matrix(B, H);

        const Matrix wt = transpose(layer.w.value);
        const Matrix ut = transpose(layer.u.value);
        gemm_nn(lc.input.data(), wt.data(), lc.gates.data(), rows, in_dim, G, false);
        auto bias = layer.b.value.row(0);

        for (std::size_t t = 0; t < T; ++t) {
            const std::span<const double> h_prev =
                t == 0 ? lc.h0.data() : std::span<const double>(lc.h.data()).subspan((t - 1) * B * H, B * H);
            const std::span<const double> c_prev =
                t == 0 ? lc.c0.data() : std::span<const double>(lc.c.data()).subspan((t - 1) * B * H, B * H);
            auto gates_t = lc.gates.data().subspan(t * B * G, B * G);
            gemm_nn(h_prev, ut.data(), gates_t, B, H, G, true);

            for (std::size_t b = 0; b < B; ++b) {
                const std::size_t r = t * B + b;
                auto a = lc.gates.row(r);
                auto c = lc.c.row(r);
                auto h = lc.h.row(r);
                auto cp = c_prev.subspan(b * H, H);
                if (!input.active(t, b)) {
                    std::fill(a.begin(), a.end(), 0.0);
                    copy_row(cp, c);
                    copy_row(h_prev.subspan(b * H, H), h);
                    continue;
                }
                auto tc = lc.tanh_c.row(r);
                for (std::size_t j = 0; j < H; ++j) {
                    const double ig = logistic(a[j] + bias[j]);
                    const double fg = logistic(a[H + j] + bias[H + j]);
                    const double gg = std::tanh(a[2 * H + j] + bias[2 * H + j]);
                    const double og = logistic(a[3 * H + j] + bias[3 * H + j]);
                    a[j] = ig;
                    a[H + j] = fg;
                    a[2 * H + j] = gg;
                    a[3 * H + j] = og;
                    c[j] = fg * cp[j] + ig * gg;
                    tc[j] = std::tanh(c[j]);
                    h[j] = og * tc[j];
                }
            }
        }

        if (T > 0) {
            for (std::size_t b = 0; b < B; ++b) {
                copy_row(lc.h.row((T - 1) * B + b), cache.final_state.h[l].row(b));
                copy_row(lc.c.row((T - 1) * B + b), cache.final_state.c[l].row(b));
            }
        } else {
            cache.final_state.h[l] = lc.h0;
            cache.final_state.c[l] = lc.c0;
        }

        if (l + 1 < cfg.layers) {
            x = Matrix(rows, H);
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t b = 0; b < B; ++b)
                    if (input.active(t, b)) copy_row(lc.h.row(t * B + b), x.row(t * B + b));
        }
        cache.layers.push_back(std::move(lc));
    }
    return cache;
}

HiddenState backward_sequence(LstmNet& net, const ForwardCache& cache, const Matrix* d_top,
                              const HiddenState* d_final) {
    if (!cache.valid()) throw StateError("backward_sequence called without a forward cache");
    const ModelConfig& cfg = net.config;
    const StepInput& input = cache.input;
    const std::size_t T = input.steps, B = input.batch, H = cfg.hidden_dim, E = cfg.embed_dim;
    const std::size_t G = 4 * H, rows = T * B;
    if (d_top && (d_top->rows() != rows || d_top->cols() != H))
        throw ShapeError("backward_sequence: d_top shape mismatch");

    HiddenState d_init = HiddenState::zeros(cfg.layers, B, H);
    Matrix d_in = d_top ? *d_top : Matrix(rows, H);
    std::vector<double> dh(H);
    Matrix dh_rec(B, H);

    for (std::size_t li = cfg.layers; li-- > 0;) {
        const LayerCache& lc = cache.layers[li];
        LstmLayer& layer = net.layers[li];
        const std::size_t in_dim = cfg.input_dim(li);

        Matrix dh_next = d_final ? d_final->h[li] : Matrix(B, H);
        Matrix dc_next = d_final ? d_final->c[li] : Matrix(B, H);
        Matrix d_gates(rows, G);

        for (std::size_t t = T; t-- > 0;) {
            for (std::size_t b = 0; b < B; ++b) {
                const std::size_t r = t * B + b;
                auto dhn = dh_next.row(b);
                auto din = d_in.row(r);
                for (std::size_t j = 0; j < H; ++j) dh[j] = dhn[j] + din[j];
                if (!input.active(t, b)) {
                    std::copy(dh.begin(), dh.end(), dhn.begin());
                    continue;
                }
                auto a = lc.gates.row(r);
                auto tc = lc.tanh_c.row(r);
                auto cp = t == 0 ? lc.c0.row(b) : lc.c.row(r - B);
                auto dcn = dc_next.row(b);
                auto da = d_gates.row(r);
                for (std::size_t j = 0; j < H; ++j) {
                    const double ig = a[j], fg = a[H + j], gg = a[2 * H + j], og = a[3 * H + j];
                    const double dc = dcn[j] + dh[j] * og * (1.0 - tc[j] * tc[j]);
                    const double d_o = dh[j] * tc[j];
                    da[j] = dc * gg * ig * (1.0 - ig);
                    da[H + j] = dc * cp[j] * fg * (1.0 - fg);
                    da[2 * H + j] = dc * ig * (1.0 - gg * gg);
                    da[3 * H + j] = d_o * og * (1.0 - og);
                    dcn[j] = dc * fg;
                }
            }
            gemm_nn(std::span<const double>(d_gates.data()).subspan(t * B * G, B * G),
                    layer.u.value.data(), dh_rec.data(), B, G, H, false);
            for (std::size_t b = 0; b < B; ++b)
                if (input.active(t, b)) copy_row(dh_rec.row(b), dh_next.row(b));
        }
        d_init.h[li] = std::move(dh_next);
        d_init.c[li] = std::move(dc_next);

        Matrix h_prev(rows, H);
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t b = 0; b < B; ++b)
                copy_row(t == 0 ? lc.h0.row(b) : lc.h.row((t - 1) * B + b), h_prev.row(t * B + b));

        gemm_tn(d_gates.data(), lc.input.data(), layer.w.grad.data(), G, rows, in_dim, true);
        gemm_tn(d_gates.data(), h_prev.data(), layer.u.grad.data(), G, rows, H, true);
        auto db = layer.b.grad.row(0);
        for (std::size_t r = 0; r < rows; ++r) {
            auto da = d_gates.row(r);
            for (std::size_t j = 0; j < G; ++j) db[j] += da[j];
        }

        Matrix d_x(rows, in_dim);
        gemm_nn(d_gates.data(), layer.w.value.data(), d_x.data(), rows, G, in_dim, false);
        if (li > 0) {
            d_in = std::move(d_x);
            continue;
        }
        const bool dropout = !cache.dropout_scale.empty();
        for (std::size_t t = 0; t < T; ++t) {
            for (std::size_t b = 0; b < B; ++b) {
                if (!input.active(t, b)) continue;
                const std::size_t r = t * B + b;
                auto g = net.embedding.grad.row(static_cast<std::size_t>(input.id(t, b)));
                auto dx = d_x.row(r);
                if (dropout) {
                    auto sc = cache.dropout_scale.row(r);
                    for (std::size_t e = 0; e < E; ++e) g[e] += dx[e] * sc[e];
                } else {
                    for (std::size_t e = 0; e < E; ++e) g[e] += dx[e];
                }
            }
        }
    }
    return d_init;
}

void LinearHead::init_uniform(Rng& rng, double range) {
    for (double& x : weight.value.data()) x = rng.uniform(-range, range);
    bias.value.fill(0.0);
}

Matrix LinearHead::forward(const Matrix& x) const {
    if (x.cols() != weight.cols()) throw ShapeError("LinearHead: input width mismatch");
    const Matrix wt = transpose(weight.value);
    Matrix out = matmul(x, wt);
    auto b = bias.value.row(0);
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto o = out.row(r);
        for (std::size_t j = 0; j < o.size(); ++j) o[j] += b[j];
    }
    return out;
}

Matrix LinearHead::backward(const Matrix& x, const Matrix& d_logits) {
    if (d_logits.rows() != x.rows() || d_logits.cols() != weight.rows())
        throw ShapeError("LinearHead: gradient shape mismatch");
    gemm_tn(d_logits.data(), x.data(), weight.grad.data(), weight.rows(), x.rows(), x.cols(), true);
    auto db = bias.grad.row(0);
    for (std::size_t r = 0; r < d_logits.rows(); ++r) {
        auto d = d_logits.row(r);
        for (std::size_t j = 0; j < d.size(); ++j) db[j] += d[j];
    }
    return matmul(d_logits, weight.value);
}

void copy_values(std::span<const NamedParam> from, std::span<const NamedParam> to) {
    if (from.size() != to.size()) throw ShapeError("copy_values: parameter count mismatch");
    for (std::size_t i = 0; i < from.size(); ++i) {
        if (!from[i].block->value.same_shape(to[i].block->value))
            throw ShapeError("copy_values: shape mismatch for " + to[i].name);
        to[i].block->value = from[i].block->value;
    }
}

std::vector<Matrix> snapshot_values(std::span<const NamedParam> params) {
    std::vector<Matrix> out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back(p.block->value);
    return out;
}

void restore_values(std::span<const NamedParam> params, const std::vector<Matrix>& values) {
    if (values.size() != params.size()) throw ShapeError("restore_values: count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) params[i].block->value = values[i];
}

}  // namespace lssa
