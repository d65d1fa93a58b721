#include "edbench/nn.hpp"

#include <cmath>

namespace edbench::nn {

void Param::init(std::string n, Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale) {
    name = std::move(n);
    value.resize(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) value(i, j) = rng.normal() * scale;
    }
    grad = Matrix::Zero(rows, cols);
    m = Matrix::Zero(rows, cols);
    v = Matrix::Zero(rows, cols);
}

void Param::init_zero(std::string n, Eigen::Index rows, Eigen::Index cols) {
    name = std::move(n);
    value = Matrix::Zero(rows, cols);
    grad = Matrix::Zero(rows, cols);
    m = Matrix::Zero(rows, cols);
    v = Matrix::Zero(rows, cols);
}

void Param::zero_grad() { grad.setZero(); }

AdamW::AdamW(std::vector<Param*> params, double lr, double weight_decay)
    : params_(std::move(params)), lr_(lr), weight_decay_(weight_decay) {}

void AdamW::step() {
    constexpr double kBeta1 = 0.9;
    constexpr double kBeta2 = 0.999;
    constexpr double kEps = 1e-8;
    ++t_;
    double bias1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    double bias2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    for (Param* p : params_) {
        p->m = kBeta1 * p->m + (1.0 - kBeta1) * p->grad;
        p->v = kBeta2 * p->v + (1.0 - kBeta2) * p->grad.cwiseProduct(p->grad);
        Matrix m_hat = p->m / bias1;
        Matrix v_hat = p->v / bias2;
        // decoupled weight decay
        p->value -= lr_ * weight_decay_ * p->value;
        p->value -= lr_ * (m_hat.array() / (v_hat.array().sqrt() + kEps)).matrix();
    }
}

void AdamW::zero_grad() {
    for (Param* p : params_) p->zero_grad();
}

double sigmoid(double x) {
    if (x >= 0.0) {
        double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

namespace {
constexpr double kInvSqrt2 = 0.7071067811865476;
constexpr double kInvSqrt2Pi = 0.3989422804014327;
}  // namespace

double gelu(double x) {
    return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
}

double gelu_grad(double x) {
    double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
    double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
    return cdf + x * pdf;
}

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

void Linear::init(const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng) {
    double scale = 1.0 / std::sqrt(static_cast<double>(in));
    W.init(name + ".W", out, in, rng, scale);
    b.init_zero(name + ".b", out, 1);
}

Matrix Linear::forward(const Matrix& x) const {
    Matrix y = x * W.value.transpose();
    y.rowwise() += b.value.col(0).transpose();
    return y;
}

Matrix Linear::backward(const Matrix& x, const Matrix& dy) {
    W.grad.noalias() += dy.transpose() * x;
    b.grad.col(0).noalias() += dy.colwise().sum().transpose();
    return dy * W.value;
}

std::vector<Param*> Linear::params() { return {&W, &b}; }

// ---------------------------------------------------------------------------
// Embedding
// ---------------------------------------------------------------------------

void Embedding::init(const std::string& name, Eigen::Index n_entries, Eigen::Index dim, Rng& rng) {
    table.init(name + ".table", n_entries, dim, rng, 0.1);
}

Eigen::RowVectorXd Embedding::forward(int index) const {
    if (index < 0 || index >= table.value.rows()) {
        throw DataError("embedding index out of range: " + std::to_string(index));
    }
    return table.value.row(index);
}

void Embedding::backward(int index, const Eigen::RowVectorXd& dy) {
    table.grad.row(index) += dy;
}

// ---------------------------------------------------------------------------
// LayerNorm
// ---------------------------------------------------------------------------

void LayerNorm::init(const std::string& name, Eigen::Index channels) {
    gamma.init_zero(name + ".gamma", channels, 1);
    gamma.value.setOnes();
    beta.init_zero(name + ".beta", channels, 1);
}

Matrix LayerNorm::forward(const Matrix& x, Matrix* x_hat_out, Vector* inv_std_out) const {
    const Eigen::Index t = x.rows();
    const Eigen::Index c = x.cols();
    Matrix x_hat(t, c);
    Vector inv_std(t);
    for (Eigen::Index i = 0; i < t; ++i) {
        double mean = x.row(i).mean();
        double var = (x.row(i).array() - mean).square().mean();
        double is = 1.0 / std::sqrt(var + kEps);
        inv_std(i) = is;
        x_hat.row(i) = (x.row(i).array() - mean) * is;
    }
    Matrix y = x_hat;
    for (Eigen::Index i = 0; i < t; ++i) {
        y.row(i) = x_hat.row(i).cwiseProduct(gamma.value.col(0).transpose()) +
                   beta.value.col(0).transpose();
    }
    if (x_hat_out) *x_hat_out = std::move(x_hat);
    if (inv_std_out) *inv_std_out = std::move(inv_std);
    return y;
}

Matrix LayerNorm::backward(const Matrix& x_hat, const Vector& inv_std, const Matrix& dy) {
    const Eigen::Index t = dy.rows();
    const Eigen::Index c = dy.cols();
    Matrix dx(t, c);
    for (Eigen::Index i = 0; i < t; ++i) {
        Eigen::RowVectorXd dyg = dy.row(i).cwiseProduct(gamma.value.col(0).transpose());
        double mean_dyg = dyg.mean();
        double mean_dyg_xhat = dyg.cwiseProduct(x_hat.row(i)).mean();
        dx.row(i) =
            (dyg.array() - mean_dyg - x_hat.row(i).array() * mean_dyg_xhat) * inv_std(i);
        gamma.grad.col(0) += dy.row(i).cwiseProduct(x_hat.row(i)).transpose();
        beta.grad.col(0) += dy.row(i).transpose();
    }
    return dx;
}

std::vector<Param*> LayerNorm::params() { return {&gamma, &beta}; }

// ---------------------------------------------------------------------------
// SsmLayer
// ---------------------------------------------------------------------------

void SsmLayer::init(const std::string& name, Eigen::Index channels, Eigen::Index states,
                    Rng& rng) {
    // a = sigmoid(a_raw) spread over (0,1) so decay horizons vary per state.
    a_raw.init_zero(name + ".a_raw", channels, states);
    for (Eigen::Index i = 0; i < channels; ++i) {
        for (Eigen::Index s = 0; s < states; ++s) {
            // roughly log-spaced retention between 0.5 and 0.999
            double frac = (static_cast<double>(s) + rng.uniform01()) / static_cast<double>(states);
            double a = 0.5 + 0.499 * frac;
            a_raw.value(i, s) = std::log(a / (1.0 - a));
        }
    }
    double scale = 1.0 / std::sqrt(static_cast<double>(states));
    b.init(name + ".b", channels, states, rng, scale);
    c.init(name + ".c", channels, states, rng, scale);
    d.init_zero(name + ".d", channels, 1);
    d.value.setOnes();
}

Matrix SsmLayer::forward(const Matrix& u) const {
    const Eigen::Index t_len = u.rows();
    const Eigen::Index n_ch = u.cols();
    const Eigen::Index n_st = a_raw.value.cols();
    Matrix y(t_len, n_ch);
    for (Eigen::Index ch = 0; ch < n_ch; ++ch) {
        y.col(ch) = d.value(ch, 0) * u.col(ch);
        for (Eigen::Index s = 0; s < n_st; ++s) {
            const double a = sigmoid(a_raw.value(ch, s));
            const double bb = b.value(ch, s);
            const double cc = c.value(ch, s);
            double h = 0.0;
            const double* up = u.col(ch).data();
            double* yp = y.col(ch).data();
            for (Eigen::Index t = 0; t < t_len; ++t) {
                h = a * h + bb * up[t];
                yp[t] += cc * h;
            }
        }
    }
    return y;
}

Matrix SsmLayer::backward(const Matrix& u, const Matrix& dy) {
    const Eigen::Index t_len = u.rows();
    const Eigen::Index n_ch = u.cols();
    const Eigen::Index n_st = a_raw.value.cols();
    Matrix du(t_len, n_ch);
    std::vector<double> h_buf(static_cast<std::size_t>(t_len));

    for (Eigen::Index ch = 0; ch < n_ch; ++ch) {
        const double* up = u.col(ch).data();
        const double* dyp = dy.col(ch).data();
        double* dup = du.col(ch).data();
        // d path
        double dd = 0.0;
        for (Eigen::Index t = 0; t < t_len; ++t) {
            dup[t] = d.value(ch, 0) * dyp[t];
            dd += dyp[t] * up[t];
        }
        d.grad(ch, 0) += dd;

        for (Eigen::Index s = 0; s < n_st; ++s) {
            const double a = sigmoid(a_raw.value(ch, s));
            const double bb = b.value(ch, s);
            const double cc = c.value(ch, s);
            // recompute hidden states for this (channel, state)
            double h = 0.0;
            for (Eigen::Index t = 0; t < t_len; ++t) {
                h = a * h + bb * up[t];
                h_buf[static_cast<std::size_t>(t)] = h;
            }
            double da = 0.0;
            double db = 0.0;
            double dc = 0.0;
            double q = 0.0;  // dL/dh_t running (reverse recurrence)
            for (Eigen::Index t = t_len - 1; t >= 0; --t) {
                dc += dyp[t] * h_buf[static_cast<std::size_t>(t)];
                q = cc * dyp[t] + a * q;
                double h_prev = t > 0 ? h_buf[static_cast<std::size_t>(t - 1)] : 0.0;
                da += q * h_prev;
                db += q * up[t];
                dup[t] += bb * q;
            }
            a_raw.grad(ch, s) += da * a * (1.0 - a);
            b.grad(ch, s) += db;
            c.grad(ch, s) += dc;
        }
    }
    return du;
}

std::vector<Param*> SsmLayer::params() { return {&a_raw, &b, &c, &d}; }

// ---------------------------------------------------------------------------
// Block
// ---------------------------------------------------------------------------

void Block::init(const std::string& name, Eigen::Index channels, Eigen::Index states, Rng& rng) {
    ssm.init(name + ".ssm", channels, states, rng);
    mix.init(name + ".mix", channels, channels, rng);
    ln.init(name + ".ln", channels);
}

Matrix Block::forward(const Matrix& u, Cache* cache) const {
    Matrix y = ssm.forward(u);
    Matrix z = y.unaryExpr([](double v) { return gelu(v); });
    Matrix m = mix.forward(z);
    Matrix r = u + m;
    Matrix x_hat;
    Vector inv_std;
    Matrix out = ln.forward(r, &x_hat, &inv_std);
    if (cache) {
        cache->u = u;
        cache->y = std::move(y);
        cache->z = std::move(z);
        cache->x_hat = std::move(x_hat);
        cache->inv_std = std::move(inv_std);
    }
    return out;
}

Matrix Block::backward(const Cache& cache, const Matrix& dy) {
    Matrix dr = ln.backward(cache.x_hat, cache.inv_std, dy);
    // residual: r = u + mix(gelu(ssm(u)))
    Matrix dz = mix.backward(cache.z, dr);
    Matrix dy_ssm = dz.cwiseProduct(cache.y.unaryExpr([](double v) { return gelu_grad(v); }));
    Matrix du = ssm.backward(cache.u, dy_ssm);
    du += dr;
    return du;
}

std::vector<Param*> Block::params() {
    std::vector<Param*> out = ssm.params();
    for (Param* p : mix.params()) out.push_back(p);
    for (Param* p : ln.params()) out.push_back(p);
    return out;
}

// ---------------------------------------------------------------------------
// WaveEncoder
// ---------------------------------------------------------------------------

void WaveEncoder::init(const WaveEncoderConfig& cfg, Rng& rng) {
    config = cfg;
    in_proj.init("wave.in_proj", cfg.n_leads, cfg.d_model, rng);
    blocks.resize(static_cast<std::size_t>(cfg.n_blocks));
    for (int i = 0; i < cfg.n_blocks; ++i) {
        blocks[static_cast<std::size_t>(i)].init("wave.block" + std::to_string(i), cfg.d_model,
                                                 cfg.d_state, rng);
    }
}

Eigen::RowVectorXd WaveEncoder::forward(const Matrix& x, Cache* cache) const {
    if (x.cols() != config.n_leads) {
        throw DataError("wave encoder expects " + std::to_string(config.n_leads) +
                        " leads, got " + std::to_string(x.cols()));
    }
    if (cache) {
        cache->x = x;
        cache->block_caches.resize(blocks.size());
        cache->t = x.rows();
    }
    Matrix h = in_proj.forward(x);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        h = blocks[i].forward(h, cache ? &cache->block_caches[i] : nullptr);
    }
    return h.colwise().mean();
}

void WaveEncoder::backward(const Cache& cache, const Eigen::RowVectorXd& dembed) {
    Matrix dh(cache.t, config.d_model);
    double inv_t = 1.0 / static_cast<double>(cache.t);
    for (Eigen::Index t = 0; t < cache.t; ++t) dh.row(t) = dembed * inv_t;
    for (std::size_t i = blocks.size(); i-- > 0;) {
        dh = blocks[i].backward(cache.block_caches[i], dh);
    }
    in_proj.backward(cache.x, dh);
}

std::vector<Param*> WaveEncoder::params() {
    std::vector<Param*> out = in_proj.params();
    for (auto& block : blocks) {
        for (Param* p : block.params()) out.push_back(p);
    }
    return out;
}

// ---------------------------------------------------------------------------
// TabEncoder
// ---------------------------------------------------------------------------

void TabEncoder::init(const TabEncoderConfig& cfg, Rng& rng) {
    config = cfg;
    embeddings.resize(cfg.categorical_cardinalities.size());
    for (std::size_t i = 0; i < embeddings.size(); ++i) {
        // +1 row for the unknown index 0
        embeddings[i].init("tab.embed" + std::to_string(i),
                           cfg.categorical_cardinalities[i] + 1, cfg.embed_dim, rng);
    }
    Eigen::Index din = cfg.numeric_dim +
                       static_cast<Eigen::Index>(embeddings.size()) * cfg.embed_dim;
    l1.init("tab.l1", din, cfg.d_model, rng);
    l2.init("tab.l2", cfg.d_model, cfg.d_model, rng);
    l3.init("tab.l3", cfg.d_model, cfg.d_model, rng);
}

Eigen::RowVectorXd TabEncoder::forward(const Eigen::RowVectorXd& numeric,
                                       const std::vector<int>& cats, Cache* cache) const {
    if (numeric.size() != config.numeric_dim) {
        throw DataError("tab encoder expects numeric dim " + std::to_string(config.numeric_dim) +
                        ", got " + std::to_string(numeric.size()));
    }
    if (cats.size() != embeddings.size()) {
        throw DataError("tab encoder categorical count mismatch");
    }
    Eigen::Index din = config.numeric_dim +
                       static_cast<Eigen::Index>(embeddings.size()) * config.embed_dim;
    Eigen::RowVectorXd input(din);
    input.head(config.numeric_dim) = numeric;
    Eigen::Index offset = config.numeric_dim;
    for (std::size_t i = 0; i < embeddings.size(); ++i) {
        input.segment(offset, config.embed_dim) = embeddings[i].forward(cats[i]);
        offset += config.embed_dim;
    }
    Eigen::RowVectorXd h1 = l1.forward(input);
    Eigen::RowVectorXd a1 = h1.unaryExpr([](double v) { return gelu(v); });
    Eigen::RowVectorXd h2 = l2.forward(a1);
    Eigen::RowVectorXd a2 = h2.unaryExpr([](double v) { return gelu(v); });
    Eigen::RowVectorXd out = l3.forward(a2);
    if (cache) {
        cache->input = std::move(input);
        cache->cat_indices = cats;
        cache->h1 = std::move(h1);
        cache->a1 = std::move(a1);
        cache->h2 = std::move(h2);
        cache->a2 = std::move(a2);
    }
    return out;
}

void TabEncoder::backward(const Cache& cache, const Eigen::RowVectorXd& dembed) {
    Eigen::RowVectorXd da2 = l3.backward(cache.a2, dembed);
    Eigen::RowVectorXd dh2 =
        da2.cwiseProduct(cache.h2.unaryExpr([](double v) { return gelu_grad(v); }));
    Eigen::RowVectorXd da1 = l2.backward(cache.a1, dh2);
    Eigen::RowVectorXd dh1 =
        da1.cwiseProduct(cache.h1.unaryExpr([](double v) { return gelu_grad(v); }));
    Eigen::RowVectorXd dinput = l1.backward(cache.input, dh1);
    Eigen::Index offset = config.numeric_dim;
    for (std::size_t i = 0; i < embeddings.size(); ++i) {
        embeddings[i].backward(cache.cat_indices[i], dinput.segment(offset, config.embed_dim));
        offset += config.embed_dim;
    }
}

std::vector<Param*> TabEncoder::params() {
    std::vector<Param*> out;
    for (auto& e : embeddings) out.push_back(&e.table);
    for (Param* p : l1.params()) out.push_back(p);
    for (Param* p : l2.params()) out.push_back(p);
    for (Param* p : l3.params()) out.push_back(p);
    return out;
}

// ---------------------------------------------------------------------------
// Masked BCE
// ---------------------------------------------------------------------------

double masked_bce(const Matrix& logits, const std::vector<std::int8_t>& y, Matrix* dlogits) {
    if (static_cast<std::size_t>(logits.size()) != y.size()) {
        throw DataError("masked_bce: logits and labels differ in size");
    }
    if (dlogits) *dlogits = Matrix::Zero(logits.rows(), logits.cols());

    double loss = 0.0;
    std::size_t n_active = 0;
    const Eigen::Index rows = logits.rows();
    const Eigen::Index cols = logits.cols();
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index col = 0; col < cols; ++col) {
            std::int8_t target = y[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) +
                                  static_cast<std::size_t>(col)];
            if (target < 0) continue;  // masked
            double z = logits(r, col);
            if (!std::isfinite(z)) throw DivergenceError("non-finite logit in masked_bce");
            // softplus(z) - y z, numerically stable
            double softplus = z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
            loss += softplus - static_cast<double>(target) * z;
            ++n_active;
        }
    }
    if (n_active == 0) return 0.0;
    double inv_n = 1.0 / static_cast<double>(n_active);
    loss *= inv_n;
    if (dlogits) {
        for (Eigen::Index r = 0; r < rows; ++r) {
            for (Eigen::Index col = 0; col < cols; ++col) {
                std::int8_t target =
                    y[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) +
                      static_cast<std::size_t>(col)];
                if (target < 0) continue;
                (*dlogits)(r, col) =
                    (sigmoid(logits(r, col)) - static_cast<double>(target)) * inv_n;
            }
        }
    }
    return loss;
}

}  // namespace edbench::nn
