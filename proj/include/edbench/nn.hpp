#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "edbench/core.hpp"

namespace edbench::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Trainable tensor with its gradient and optimizer moments.
struct Param {
    std::string name;
    Matrix value;
    Matrix grad;
    Matrix m;  // first moment
    Matrix v;  // second moment

    void init(std::string name, Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale);
    void init_zero(std::string name, Eigen::Index rows, Eigen::Index cols);
    void zero_grad();
};

/// Decoupled-weight-decay adaptive-moment optimizer, constant schedule.
class AdamW {
  public:
    AdamW(std::vector<Param*> params, double lr, double weight_decay);
    void step();
    void zero_grad();

  private:
    std::vector<Param*> params_;
    double lr_;
    double weight_decay_;
    std::int64_t t_ = 0;
};

double gelu(double x);
double gelu_grad(double x);

// ---------------------------------------------------------------------------
// Layers. forward() fills a per-call cache that backward() consumes;
// backward() accumulates parameter gradients and returns d(input).
// ---------------------------------------------------------------------------

struct Linear {
    Param W;  // out x in
    Param b;  // out x 1

    void init(const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng);
    Matrix forward(const Matrix& x) const;              // x: n x in -> n x out
    Matrix backward(const Matrix& x, const Matrix& dy);  // returns dx
    std::vector<Param*> params();
};

struct Embedding {
    Param table;  // n_entries x dim, row 0 = unknown

    void init(const std::string& name, Eigen::Index n_entries, Eigen::Index dim, Rng& rng);
    Eigen::RowVectorXd forward(int index) const;
    void backward(int index, const Eigen::RowVectorXd& dy);
};

struct LayerNorm {
    Param gamma;  // C x 1
    Param beta;   // C x 1
    static constexpr double kEps = 1e-5;

    void init(const std::string& name, Eigen::Index channels);
    /// Normalizes each row of x over channels.
    Matrix forward(const Matrix& x, Matrix* x_hat_out, Vector* inv_std_out) const;
    Matrix backward(const Matrix& x_hat, const Vector& inv_std, const Matrix& dy);
    std::vector<Param*> params();
};

/// Diagonal linear state-space scan per channel: S states with
/// h_t = a h_{t-1} + b u_t, y_t = sum_s c_s h_t + d u_t, a = sigmoid(a_raw).
struct SsmLayer {
    Param a_raw;  // C x S
    Param b;      // C x S
    Param c;      // C x S
    Param d;      // C x 1

    void init(const std::string& name, Eigen::Index channels, Eigen::Index states, Rng& rng);
    /// u: T x C -> y: T x C.
    Matrix forward(const Matrix& u) const;
    /// Recomputes per-(channel,state) scans internally; needs the forward
    /// input. Returns du.
    Matrix backward(const Matrix& u, const Matrix& dy);
    std::vector<Param*> params();
};

/// scan -> GELU -> channel mix -> residual -> layer norm.
struct Block {
    SsmLayer ssm;
    Linear mix;
    LayerNorm ln;

    struct Cache {
        Matrix u;      // block input
        Matrix y;      // ssm output (pre-GELU)
        Matrix z;      // gelu(y)
        Matrix x_hat;  // layer-norm normalized input
        Vector inv_std;
    };

    void init(const std::string& name, Eigen::Index channels, Eigen::Index states, Rng& rng);
    Matrix forward(const Matrix& u, Cache* cache) const;
    Matrix backward(const Cache& cache, const Matrix& dy);
    std::vector<Param*> params();
};

struct WaveEncoderConfig {
    int n_blocks = 2;
    int d_model = 64;
    int d_state = 8;
    int n_leads = 12;
};

/// Input projection, n_blocks scan blocks, mean pooling over time.
struct WaveEncoder {
    WaveEncoderConfig config;
    Linear in_proj;
    std::vector<Block> blocks;

    struct Cache {
        Matrix x;  // T x leads input
        std::vector<Block::Cache> block_caches;
        Eigen::Index t = 0;
    };

    void init(const WaveEncoderConfig& config, Rng& rng);
    /// x: T x n_leads -> embedding 1 x d_model.
    Eigen::RowVectorXd forward(const Matrix& x, Cache* cache) const;
    void backward(const Cache& cache, const Eigen::RowVectorXd& dembed);
    std::vector<Param*> params();
};

struct TabEncoderConfig {
    int numeric_dim = 0;   // numeric + ecg (+ mask bits when enabled)
    int d_model = 64;
    int embed_dim = 8;
    std::vector<int> categorical_cardinalities;  // vocab size per field (without unknown)
};

/// Categorical embeddings concatenated with numeric input, then a 3-layer
/// perceptron to d_model.
struct TabEncoder {
    TabEncoderConfig config;
    std::vector<Embedding> embeddings;
    Linear l1, l2, l3;

    struct Cache {
        Eigen::RowVectorXd input;  // concatenated numeric + embeddings
        std::vector<int> cat_indices;
        Eigen::RowVectorXd h1, a1, h2, a2;  // pre/post activations
    };

    void init(const TabEncoderConfig& config, Rng& rng);
    Eigen::RowVectorXd forward(const Eigen::RowVectorXd& numeric, const std::vector<int>& cats,
                               Cache* cache) const;
    void backward(const Cache& cache, const Eigen::RowVectorXd& dembed);
    std::vector<Param*> params();
};

/// Masked binary cross-entropy over logits; MASKED entries contribute
/// nothing to loss or gradient. Returns loss; fills dlogits (same shape).
/// y entries: 0, 1, or -1 (masked).
double masked_bce(const Matrix& logits, const std::vector<std::int8_t>& y, Matrix* dlogits);

double sigmoid(double x);

}  // namespace edbench::nn
