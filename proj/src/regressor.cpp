#include "xtrace/regressor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "xtrace/rng.hpp"

namespace xtrace {

namespace {

constexpr double kPosFloor = 1e-12;

double softplus(double x) {
    double v = x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    return v > kPosFloor ? v : kPosFloor;
}

double sigmoid(double x) {
    return x > 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

EvidentialParams transform_head(const double raw[4]) {
    EvidentialParams p;
    p.gamma = raw[0];
    p.nu = softplus(raw[1]);
    p.alpha = 1.0 + softplus(raw[2]);
    p.beta = softplus(raw[3]);
    return p;
}

// one causal conv output position; in_rows holds the K source rows, newest first
void conv_position(const double* w, const double* b, const double* const* in_rows, int kernel,
                   int in_ch, int out_ch, double* out_row) {
    for (int co = 0; co < out_ch; ++co) {
        double acc = b[co];
        const double* wc = w + static_cast<std::size_t>(co) * kernel * in_ch;
        for (int k = 0; k < kernel; ++k) {
            const double* row = in_rows[k];
            const double* wr = wc + static_cast<std::size_t>(k) * in_ch;
            for (int ci = 0; ci < in_ch; ++ci) acc += wr[ci] * row[ci];
        }
        out_row[co] = std::tanh(acc);
    }
}

void head_position(const double* w, const double* b, const double* hidden, int hidden_dim,
                   double out4[4]) {
    for (int o = 0; o < 4; ++o) {
        double acc = b[o];
        const double* wr = w + static_cast<std::size_t>(o) * hidden_dim;
        for (int h = 0; h < hidden_dim; ++h) acc += wr[h] * hidden[h];
        out4[o] = acc;
    }
}

} // namespace

double digamma(double x) {
    double result = 0.0;
    while (x < 6.0) {
        result -= 1.0 / x;
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    // asymptotic expansion, error ~1e-11 for x >= 6
    double series = std::log(x) - 0.5 * inv;
    series -= inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 -
              inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0)))));
    return result + series;
}

Moments moments(const EvidentialParams& p) {
    Moments m;
    m.mean = p.gamma;
    m.aleatoric_raw = p.beta / (p.alpha - 1.0);
    m.epistemic_raw = p.beta / (p.nu * (p.alpha - 1.0));
    return m;
}

namespace {
double squash(double u) {
    return u / (1.0 + u);
}

UncertaintyTriple squash_triple(const Moments& m) {
    UncertaintyTriple t;
    t.epistemic = clamp_unit(squash(m.epistemic_raw));
    t.aleatoric = clamp_unit(squash(m.aleatoric_raw));
    t.cumulative = clamp_unit(squash(m.epistemic_raw + m.aleatoric_raw));
    return t;
}
} // namespace

AffectOutput to_affect_output(const Moments& valence, const Moments& arousal) {
    AffectOutput out;
    out.va.valence = clamp_signed_unit(valence.mean);
    out.va.arousal = clamp_signed_unit(arousal.mean);
    out.uncertainty_valence = squash_triple(valence);
    out.uncertainty_arousal = squash_triple(arousal);
    return out;
}

double evidential_nll(double y, const EvidentialParams& p) {
    const double r = y - p.gamma;
    const double omega = 2.0 * p.beta * (1.0 + p.nu);
    const double a = p.nu * r * r + omega;
    return 0.5 * std::log(M_PI / p.nu) - p.alpha * std::log(omega) +
           (p.alpha + 0.5) * std::log(a) + std::lgamma(p.alpha) - std::lgamma(p.alpha + 0.5);
}

// ------------------------------------------------------------------ Model

void Model::build_layout() {
    if (cfg_.input_dim < 1 || cfg_.hidden_dim < 1 || cfg_.temporal_layers < 1 ||
        cfg_.kernel_size < 1)
        throw ConfigError("model dimensions must be >= 1");
    if (cfg_.kernel_size > 64 || cfg_.temporal_layers > 16)
        throw ConfigError("kernel_size is limited to 64 and temporal_layers to 16");

    layers_.clear();
    std::size_t off = 0;
    int in_ch = cfg_.input_dim;
    int dilation = 1;
    for (int l = 0; l < cfg_.temporal_layers; ++l) {
        LayerSpec s;
        s.in_ch = in_ch;
        s.out_ch = cfg_.hidden_dim;
        s.kernel = cfg_.kernel_size;
        s.dilation = dilation;
        s.w_off = off;
        off += static_cast<std::size_t>(s.out_ch) * s.kernel * s.in_ch;
        s.b_off = off;
        off += static_cast<std::size_t>(s.out_ch);
        layers_.push_back(s);
        in_ch = cfg_.hidden_dim;
        dilation *= 2;
    }
    for (int d = 0; d < 2; ++d) {
        head_w_off_[d] = off;
        off += static_cast<std::size_t>(4) * cfg_.hidden_dim;
        head_b_off_[d] = off;
        off += 4;
    }
    params_.assign(off, 0.0);
}

std::size_t Model::expected_parameter_count(const ModelConfig& cfg) {
    std::size_t count = 0;
    int in_ch = cfg.input_dim;
    for (int l = 0; l < cfg.temporal_layers; ++l) {
        count += static_cast<std::size_t>(cfg.hidden_dim) * cfg.kernel_size * in_ch;
        count += cfg.hidden_dim;
        in_ch = cfg.hidden_dim;
    }
    count += 2 * (static_cast<std::size_t>(4) * cfg.hidden_dim + 4);
    return count;
}

void Model::init_parameters() {
    Rng rng(cfg_.seed);
    for (const LayerSpec& s : layers_) {
        const double fan_in = static_cast<double>(s.in_ch) * s.kernel;
        const double fan_out = static_cast<double>(s.out_ch) * s.kernel;
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        const std::size_t n_w = static_cast<std::size_t>(s.out_ch) * s.kernel * s.in_ch;
        for (std::size_t i = 0; i < n_w; ++i) params_[s.w_off + i] = rng.uniform(-bound, bound);
        for (int i = 0; i < s.out_ch; ++i) params_[s.b_off + i] = 0.0;
    }
    for (int d = 0; d < 2; ++d) {
        const double bound = std::sqrt(6.0 / (cfg_.hidden_dim + 4.0));
        for (std::size_t i = 0; i < static_cast<std::size_t>(4) * cfg_.hidden_dim; ++i)
            params_[head_w_off_[d] + i] = rng.uniform(-bound, bound);
        for (int i = 0; i < 4; ++i) params_[head_b_off_[d] + i] = 0.0;
    }
}

Model::Model(const ModelConfig& cfg) : cfg_(cfg) {
    build_layout();
    init_parameters();
}

struct Model::ForwardCache {
    int rows = 0;
    std::vector<std::vector<double>> acts;  // acts[l]: rows x out_ch, post-tanh
    std::vector<double> head_raw[2];        // rows x 4, pre-transform
};

void Model::forward_cached(std::span<const double> window, ForwardCache& cache) const {
    const int in_dim = cfg_.input_dim;
    if (window.empty() || window.size() % static_cast<std::size_t>(in_dim) != 0)
        throw ShapeMismatch("window size " + std::to_string(window.size()) +
                            " is not a positive multiple of input_dim " + std::to_string(in_dim));
    const int rows = static_cast<int>(window.size() / in_dim);
    cache.rows = rows;
    cache.acts.assign(layers_.size(), {});

    const double* in = window.data();
    int cur_ch = in_dim;
    const double* in_rows[64];
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const LayerSpec& s = layers_[l];
        cache.acts[l].resize(static_cast<std::size_t>(rows) * s.out_ch);
        double* out = cache.acts[l].data();
        for (int n = 0; n < rows; ++n) {
            for (int k = 0; k < s.kernel; ++k) {
                int src = n - k * s.dilation;
                if (src < 0) src = 0;  // replicate first row at the left edge
                in_rows[k] = in + static_cast<std::size_t>(src) * cur_ch;
            }
            conv_position(&params_[s.w_off], &params_[s.b_off], in_rows, s.kernel, cur_ch,
                          s.out_ch, out + static_cast<std::size_t>(n) * s.out_ch);
        }
        in = cache.acts[l].data();
        cur_ch = s.out_ch;
    }

    const double* hidden = cache.acts.back().data();
    for (int d = 0; d < 2; ++d) {
        cache.head_raw[d].resize(static_cast<std::size_t>(rows) * 4);
        for (int n = 0; n < rows; ++n) {
            head_position(&params_[head_w_off_[d]], &params_[head_b_off_[d]],
                          hidden + static_cast<std::size_t>(n) * cfg_.hidden_dim,
                          cfg_.hidden_dim, &cache.head_raw[d][static_cast<std::size_t>(n) * 4]);
        }
    }
}

Model::Output Model::forward(std::span<const double> window) const {
    ForwardCache cache;
    forward_cached(window, cache);
    Output out;
    out.valence.resize(cache.rows);
    out.arousal.resize(cache.rows);
    for (int n = 0; n < cache.rows; ++n) {
        out.valence[n] = transform_head(&cache.head_raw[0][static_cast<std::size_t>(n) * 4]);
        out.arousal[n] = transform_head(&cache.head_raw[1][static_cast<std::size_t>(n) * 4]);
    }
    return out;
}

void Model::forward_last(std::span<const double> window, EvidentialParams& valence,
                         EvidentialParams& arousal) const {
    const int in_dim = cfg_.input_dim;
    if (window.empty() || window.size() % static_cast<std::size_t>(in_dim) != 0)
        throw ShapeMismatch("window size is not a positive multiple of input_dim");
    const int rows = static_cast<int>(window.size() / in_dim);
    const int n_layers = static_cast<int>(layers_.size());

    // positions of each layer's output required to produce the final frame
    std::vector<std::vector<int>> need(n_layers);
    need[n_layers - 1] = {rows - 1};
    for (int l = n_layers - 1; l >= 1; --l) {
        std::vector<int> req;
        req.reserve(need[l].size() * layers_[l].kernel);
        for (int p : need[l]) {
            for (int k = 0; k < layers_[l].kernel; ++k) {
                int src = p - k * layers_[l].dilation;
                req.push_back(src < 0 ? 0 : src);
            }
        }
        std::sort(req.begin(), req.end());
        req.erase(std::unique(req.begin(), req.end()), req.end());
        need[l - 1] = std::move(req);
    }

    std::vector<std::vector<double>> computed(n_layers);
    const double* in_rows[64];
    for (int l = 0; l < n_layers; ++l) {
        const LayerSpec& s = layers_[l];
        computed[l].resize(need[l].size() * static_cast<std::size_t>(s.out_ch));
        for (std::size_t idx = 0; idx < need[l].size(); ++idx) {
            const int p = need[l][idx];
            for (int k = 0; k < s.kernel; ++k) {
                int src = p - k * s.dilation;
                if (src < 0) src = 0;
                if (l == 0) {
                    in_rows[k] = window.data() + static_cast<std::size_t>(src) * in_dim;
                } else {
                    const auto& prev = need[l - 1];
                    const auto it = std::lower_bound(prev.begin(), prev.end(), src);
                    in_rows[k] = computed[l - 1].data() +
                                 static_cast<std::size_t>(it - prev.begin()) * layers_[l - 1].out_ch;
                }
            }
            conv_position(&params_[s.w_off], &params_[s.b_off], in_rows, s.kernel, s.in_ch,
                          s.out_ch, computed[l].data() + idx * static_cast<std::size_t>(s.out_ch));
        }
    }

    const double* hidden = computed[n_layers - 1].data();
    double raw[4];
    head_position(&params_[head_w_off_[0]], &params_[head_b_off_[0]], hidden, cfg_.hidden_dim, raw);
    valence = transform_head(raw);
    head_position(&params_[head_w_off_[1]], &params_[head_b_off_[1]], hidden, cfg_.hidden_dim, raw);
    arousal = transform_head(raw);
}

// ------------------------------------------------------------------ loss

namespace {

struct PositionGrad {
    double d_gamma = 0.0, d_nu = 0.0, d_alpha = 0.0, d_beta = 0.0;
};

// NLL + lambda_reg |y-gamma| (2 nu + alpha), with gradients wrt (gamma,nu,alpha,beta)
double nll_reg_with_grad(double y, const EvidentialParams& p, double lambda_reg,
                         PositionGrad& g) {
    const double r = y - p.gamma;
    const double omega = 2.0 * p.beta * (1.0 + p.nu);
    const double a = p.nu * r * r + omega;
    const double nll = 0.5 * std::log(M_PI / p.nu) - p.alpha * std::log(omega) +
                       (p.alpha + 0.5) * std::log(a) + std::lgamma(p.alpha) -
                       std::lgamma(p.alpha + 0.5);
    g.d_gamma = -(p.alpha + 0.5) * 2.0 * p.nu * r / a;
    g.d_nu = -0.5 / p.nu - p.alpha * 2.0 * p.beta / omega + (p.alpha + 0.5) * (r * r + 2.0 * p.beta) / a;
    g.d_alpha = -std::log(omega) + std::log(a) + digamma(p.alpha) - digamma(p.alpha + 0.5);
    g.d_beta = -p.alpha * 2.0 * (1.0 + p.nu) / omega + (p.alpha + 0.5) * 2.0 * (1.0 + p.nu) / a;

    const double abs_r = std::abs(r);
    const double sign_r = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
    const double reg = lambda_reg * abs_r * (2.0 * p.nu + p.alpha);
    g.d_gamma += lambda_reg * -sign_r * (2.0 * p.nu + p.alpha);
    g.d_nu += lambda_reg * abs_r * 2.0;
    g.d_alpha += lambda_reg * abs_r;
    return nll + reg;
}

struct CccValue {
    double value = 0.0;
    bool degenerate = false;
    // cached statistics for the gradient
    double mx = 0.0, my = 0.0, sxy = 0.0, denom = 0.0;
};

CccValue batch_ccc(const std::vector<double>& x, const std::vector<double>& y) {
    CccValue c;
    const double n = static_cast<double>(x.size());
    if (x.size() < 2) {
        c.degenerate = true;
        return c;
    }
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double vx = 0.0, vy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        vx += dx * dx;
        vy += dy * dy;
        sxy += dx * dy;
    }
    vx /= n;
    vy /= n;
    sxy /= n;
    const double gap = mx - my;
    const double denom = vx + vy + gap * gap;
    if (denom == 0.0) {
        c.degenerate = true;
        return c;
    }
    c.value = 2.0 * sxy / denom;
    c.mx = mx;
    c.my = my;
    c.sxy = sxy;
    c.denom = denom;
    return c;
}

double batch_ccc_grad(const CccValue& c, double x_i, double y_i, std::size_t n_points) {
    if (c.degenerate) return 0.0;
    const double n = static_cast<double>(n_points);
    const double d = c.denom;
    return (2.0 / n) * ((y_i - c.my) * d - 2.0 * c.sxy * ((x_i - c.mx) + (c.mx - c.my))) / (d * d);
}

} // namespace

struct ModelBackprop {
    static void run(const Model& model, const Model::ForwardCache& cache,
                    std::span<const double> window, const std::vector<double> (&d_head_raw)[2],
                    std::vector<double>& grad) {
        const auto& cfg = model.cfg_;
        const int rows = cache.rows;
        const int hidden = cfg.hidden_dim;

        // heads: accumulate weight grads, build d(hidden activations)
        std::vector<double> d_act(static_cast<std::size_t>(rows) * hidden, 0.0);
        const double* h = cache.acts.back().data();
        for (int d = 0; d < 2; ++d) {
            double* dw = grad.data() + model.head_w_off_[d];
            double* db = grad.data() + model.head_b_off_[d];
            const double* w = model.params_.data() + model.head_w_off_[d];
            for (int n = 0; n < rows; ++n) {
                const double* dr = &d_head_raw[d][static_cast<std::size_t>(n) * 4];
                const double* hn = h + static_cast<std::size_t>(n) * hidden;
                double* dn = d_act.data() + static_cast<std::size_t>(n) * hidden;
                for (int o = 0; o < 4; ++o) {
                    const double g = dr[o];
                    if (g == 0.0) continue;
                    db[o] += g;
                    const double* wr = w + static_cast<std::size_t>(o) * hidden;
                    double* dwr = dw + static_cast<std::size_t>(o) * hidden;
                    for (int i = 0; i < hidden; ++i) {
                        dwr[i] += g * hn[i];
                        dn[i] += g * wr[i];
                    }
                }
            }
        }

        // conv stack, top to bottom
        for (int l = static_cast<int>(model.layers_.size()) - 1; l >= 0; --l) {
            const auto& s = model.layers_[l];
            const double* acts = cache.acts[l].data();
            const double* in = l == 0 ? window.data() : cache.acts[l - 1].data();
            const int in_ch = s.in_ch;
            std::vector<double> d_in;
            if (l > 0) d_in.assign(static_cast<std::size_t>(rows) * in_ch, 0.0);
            double* dw = grad.data() + s.w_off;
            double* db = grad.data() + s.b_off;
            const double* w = model.params_.data() + s.w_off;

            for (int n = 0; n < rows; ++n) {
                const double* a_row = acts + static_cast<std::size_t>(n) * s.out_ch;
                const double* d_row = d_act.data() + static_cast<std::size_t>(n) * s.out_ch;
                for (int co = 0; co < s.out_ch; ++co) {
                    const double dz = d_row[co] * (1.0 - a_row[co] * a_row[co]);
                    if (dz == 0.0) continue;
                    db[co] += dz;
                    const std::size_t base = static_cast<std::size_t>(co) * s.kernel * in_ch;
                    for (int k = 0; k < s.kernel; ++k) {
                        int src = n - k * s.dilation;
                        if (src < 0) src = 0;
                        const double* in_row = in + static_cast<std::size_t>(src) * in_ch;
                        double* dw_row = dw + base + static_cast<std::size_t>(k) * in_ch;
                        if (l > 0) {
                            const double* w_row = w + base + static_cast<std::size_t>(k) * in_ch;
                            double* di_row = d_in.data() + static_cast<std::size_t>(src) * in_ch;
                            for (int ci = 0; ci < in_ch; ++ci) {
                                dw_row[ci] += dz * in_row[ci];
                                di_row[ci] += dz * w_row[ci];
                            }
                        } else {
                            for (int ci = 0; ci < in_ch; ++ci) dw_row[ci] += dz * in_row[ci];
                        }
                    }
                }
            }
            if (l > 0) d_act = std::move(d_in);
        }
    }
};

Model::LossValue Model::loss_impl(const Batch& batch, const TrainConfig& tc,
                                  std::vector<double>* grad) const {
    if (batch.windows.empty()) throw EmptyTrainSet("loss on empty batch");
    if (batch.windows.size() != batch.targets.size())
        throw ShapeMismatch("batch windows/targets size mismatch");

    const std::size_t n_windows = batch.windows.size();
    std::vector<ForwardCache> caches(n_windows);
    std::size_t total_positions = 0;
    for (std::size_t wi = 0; wi < n_windows; ++wi) {
        forward_cached(batch.windows[wi], caches[wi]);
        if (batch.targets[wi].size() != static_cast<std::size_t>(caches[wi].rows))
            throw ShapeMismatch("targets do not match window rows");
        total_positions += caches[wi].rows;
    }

    // gather transformed params and targets per dimension
    std::vector<double> gammas[2], targets[2];
    std::vector<EvidentialParams> ev[2];
    for (int d = 0; d < 2; ++d) {
        gammas[d].reserve(total_positions);
        targets[d].reserve(total_positions);
        ev[d].reserve(total_positions);
    }
    for (std::size_t wi = 0; wi < n_windows; ++wi) {
        const auto& cache = caches[wi];
        for (int n = 0; n < cache.rows; ++n) {
            for (int d = 0; d < 2; ++d) {
                EvidentialParams p = transform_head(&cache.head_raw[d][static_cast<std::size_t>(n) * 4]);
                ev[d].push_back(p);
                gammas[d].push_back(p.gamma);
            }
            targets[0].push_back(batch.targets[wi][n].valence);
            targets[1].push_back(batch.targets[wi][n].arousal);
        }
    }

    const double m_total = static_cast<double>(total_positions);
    LossValue loss;
    CccValue ccc_val[2];
    std::vector<PositionGrad> pos_grad[2];
    for (int d = 0; d < 2; ++d) {
        if (grad) pos_grad[d].resize(total_positions);
        double nll_reg_sum = 0.0;
        for (std::size_t i = 0; i < total_positions; ++i) {
            PositionGrad g;
            const double v = nll_reg_with_grad(targets[d][i], ev[d][i], tc.lambda_reg, g);
            nll_reg_sum += v;
            if (grad) pos_grad[d][i] = g;
        }
        ccc_val[d] = batch_ccc(gammas[d], targets[d]);
        const double ccc_loss = tc.lambda_ccc * (1.0 - (ccc_val[d].degenerate ? 0.0 : ccc_val[d].value));
        loss.nll += 0.5 * nll_reg_sum / m_total;
        loss.ccc_term += 0.5 * ccc_loss;
    }
    loss.total = loss.nll + loss.ccc_term;
    if (!std::isfinite(loss.total)) throw NonFiniteLoss("loss is not finite");
    if (!grad) return loss;

    // per-position gradients in (gamma, nu, alpha, beta), then chain through
    // the softplus transforms into raw head space and backprop per window
    const double pos_scale = 0.5 / m_total;
    std::size_t offset = 0;
    for (std::size_t wi = 0; wi < n_windows; ++wi) {
        const auto& cache = caches[wi];
        std::vector<double> d_head_raw[2];
        for (int d = 0; d < 2; ++d) {
            d_head_raw[d].assign(static_cast<std::size_t>(cache.rows) * 4, 0.0);
            for (int n = 0; n < cache.rows; ++n) {
                const std::size_t i = offset + static_cast<std::size_t>(n);
                PositionGrad g = pos_grad[d][i];
                g.d_gamma *= pos_scale;
                g.d_nu *= pos_scale;
                g.d_alpha *= pos_scale;
                g.d_beta *= pos_scale;
                g.d_gamma += -0.5 * tc.lambda_ccc *
                             batch_ccc_grad(ccc_val[d], gammas[d][i], targets[d][i], total_positions);
                const double* raw = &cache.head_raw[d][static_cast<std::size_t>(n) * 4];
                double* dr = &d_head_raw[d][static_cast<std::size_t>(n) * 4];
                dr[0] = g.d_gamma;
                dr[1] = g.d_nu * sigmoid(raw[1]);
                dr[2] = g.d_alpha * sigmoid(raw[2]);
                dr[3] = g.d_beta * sigmoid(raw[3]);
            }
        }
        ModelBackprop::run(*this, cache, batch.windows[wi], d_head_raw, *grad);
        offset += static_cast<std::size_t>(cache.rows);
    }
    return loss;
}

Model::LossValue Model::loss_and_grad(const Batch& batch, const TrainConfig& tc,
                                      std::vector<double>& grad) const {
    grad.assign(params_.size(), 0.0);
    return loss_impl(batch, tc, &grad);
}

double Model::loss_value(const Batch& batch, const TrainConfig& tc) const {
    return loss_impl(batch, tc, nullptr).total;
}

// ------------------------------------------------------------------ checkpoint

namespace {
constexpr const char* kCheckpointMagic = "xtrace-checkpoint 1";
}

void Model::save(std::ostream& out) const {
    nlohmann::ordered_json cfg;
    cfg["input_dim"] = cfg_.input_dim;
    cfg["hidden_dim"] = cfg_.hidden_dim;
    cfg["temporal_layers"] = cfg_.temporal_layers;
    cfg["kernel_size"] = cfg_.kernel_size;
    cfg["seed"] = cfg_.seed;
    out << kCheckpointMagic << '\n' << cfg.dump() << '\n' << params_.size() << '\n';
    char buf[48];
    for (double p : params_) {
        std::snprintf(buf, sizeof(buf), "%a", p);
        out << buf << '\n';
    }
}

void Model::save_file(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    save(out);
    if (!out) throw IoError("checkpoint write failed: " + path);
}

Model Model::load(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kCheckpointMagic)
        throw CheckpointError("bad checkpoint magic");
    if (!std::getline(in, line)) throw CheckpointError("missing checkpoint config");
    ModelConfig cfg;
    try {
        auto j = nlohmann::json::parse(line);
        cfg.input_dim = j.at("input_dim").get<int>();
        cfg.hidden_dim = j.at("hidden_dim").get<int>();
        cfg.temporal_layers = j.at("temporal_layers").get<int>();
        cfg.kernel_size = j.at("kernel_size").get<int>();
        cfg.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("bad checkpoint config: ") + e.what());
    }
    if (!std::getline(in, line)) throw CheckpointError("missing parameter count");
    Model model(cfg);
    const std::size_t count = std::stoull(line);
    if (count != model.params_.size())
        throw CheckpointError("parameter count mismatch: file has " + line + ", config needs " +
                              std::to_string(model.params_.size()));
    for (std::size_t i = 0; i < count; ++i) {
        if (!std::getline(in, line)) throw CheckpointError("truncated parameter array");
        char* end = nullptr;
        model.params_[i] = std::strtod(line.c_str(), &end);
        if (end == line.c_str()) throw CheckpointError("bad parameter at index " + std::to_string(i));
    }
    return model;
}

Model Model::load_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    return load(in);
}

// ------------------------------------------------------------------ training

TrainClip make_train_clip(std::vector<double> features, int input_dim, VAPoint label) {
    TrainClip clip;
    if (input_dim < 1 || features.empty() || features.size() % static_cast<std::size_t>(input_dim) != 0)
        throw ShapeMismatch("train clip features are not a positive multiple of input_dim");
    clip.rows = static_cast<int>(features.size() / input_dim);
    clip.features = std::move(features);
    clip.targets.assign(clip.rows, label);
    return clip;
}

TrainResult train(Model& model, const std::vector<TrainClip>& clips, const TrainConfig& tc) {
    if (clips.empty()) throw EmptyTrainSet("no training clips");
    if (tc.batch_size < 1 || tc.epochs < 0) throw ConfigError("bad train config");

    const std::size_t n_params = model.parameter_count();
    std::vector<double> m(n_params, 0.0), v(n_params, 0.0), grad;
    const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    long step = 0;

    std::vector<std::size_t> order(clips.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(tc.seed);

    TrainResult result;
    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        // Fisher-Yates with the dedicated stream
        for (std::size_t i = order.size(); i > 1; --i) {
            const std::size_t j = shuffle_rng.next_u64() % i;
            std::swap(order[i - 1], order[j]);
        }
        // linear decay to 20% of the initial rate over the run
        const double lr = tc.learning_rate *
                          (tc.epochs > 1 ? 1.0 - 0.8 * epoch / (tc.epochs - 1.0) : 1.0);
        double epoch_loss = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
            const std::size_t stop = std::min(order.size(), start + tc.batch_size);
            Model::Batch batch;
            for (std::size_t i = start; i < stop; ++i) {
                const TrainClip& clip = clips[order[i]];
                batch.windows.push_back(clip.features);
                batch.targets.push_back(clip.targets);
            }
            const auto loss = model.loss_and_grad(batch, tc, grad);
            if (!std::isfinite(loss.total)) throw NonFiniteLoss("training diverged");
            epoch_loss += loss.total;
            ++n_batches;

            ++step;
            const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
            auto params = model.parameters_mutable();
            for (std::size_t p = 0; p < n_params; ++p) {
                m[p] = beta1 * m[p] + (1.0 - beta1) * grad[p];
                v[p] = beta2 * v[p] + (1.0 - beta2) * grad[p] * grad[p];
                const double mhat = m[p] / bc1;
                const double vhat = v[p] / bc2;
                params[p] -= lr * mhat / (std::sqrt(vhat) + adam_eps);
            }
        }
        result.epoch_loss.push_back(epoch_loss / static_cast<double>(n_batches));
    }
    return result;
}

double grad_check(const Model& model, const Model::Batch& sample, const TrainConfig& tc,
                  double eps, int max_coords, std::uint64_t seed) {
    if (eps <= 0.0) throw ConfigError("grad_check eps must be > 0");
    std::vector<double> analytic;
    Model work = model;
    work.loss_and_grad(sample, tc, analytic);

    const std::size_t n = work.parameter_count();
    std::vector<std::size_t> coords;
    if (n <= static_cast<std::size_t>(max_coords)) {
        coords.resize(n);
        for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    } else {
        // seeded partial Fisher-Yates for a subset without replacement
        std::vector<std::size_t> all(n);
        for (std::size_t i = 0; i < n; ++i) all[i] = i;
        Rng rng(seed);
        for (int i = 0; i < max_coords; ++i) {
            const std::size_t j = i + rng.next_u64() % (n - i);
            std::swap(all[i], all[j]);
        }
        coords.assign(all.begin(), all.begin() + max_coords);
    }

    double g_max = 0.0;
    for (double g : analytic) g_max = std::max(g_max, std::abs(g));

    double max_rel = 0.0;
    auto params = work.parameters_mutable();
    for (std::size_t c : coords) {
        const double orig = params[c];
        params[c] = orig + eps;
        const double up = work.loss_value(sample, tc);
        params[c] = orig - eps;
        const double down = work.loss_value(sample, tc);
        params[c] = orig;
        const double numeric = (up - down) / (2.0 * eps);
        const double a = analytic[c];
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-3 * g_max, 1e-12});
        max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
    }
    return max_rel;
}

} // namespace xtrace
