#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "textheads/rng.hpp"
#include "textheads/tensor.hpp"

namespace textheads {

enum class Mode { train, eval };

enum class Activation { relu, tanh, sigmoid };

enum class Padding { valid, same };

// Elementwise arithmetic. Operands must have identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

/// Adds a length-n vector to every row of an [m,n] (or [n]) tensor.
Tensor add_row(const Tensor& x, const Tensor& row);

/// Sum of all elements as a [1] tensor.
Tensor sum(const Tensor& x);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);

/// y = x·Wᵀ + b for x of shape [T,in] or [in], W of shape [out,in] and b of
/// shape [out] (b may be undefined).
Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor activation(Activation kind, const Tensor& x);
inline Tensor relu(const Tensor& x) { return activation(Activation::relu, x); }
inline Tensor tanh(const Tensor& x) { return activation(Activation::tanh, x); }
inline Tensor sigmoid(const Tensor& x) { return activation(Activation::sigmoid, x); }

Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
/// Stacks equally shaped tensors along a new leading axis.
Tensor stack(const std::vector<Tensor>& parts);
/// Elements [begin, end) along `axis`.
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
/// Row t of a rank-2 tensor as a rank-1 tensor.
Tensor row(const Tensor& x, std::size_t t);

/// input [T,Din], weights [K,w,Din], bias [K] -> [Tout,K].
/// valid: Tout = T-w+1. same: zero padding of floor((w-1)/2) on the left and
/// ceil((w-1)/2) on the right, Tout = T.
Tensor conv1d(const Tensor& input, const Tensor& weights, const Tensor& bias, Padding padding);

/// [T,K] -> [K]; gradient goes to the first maximal position.
Tensor max_over_time(const Tensor& input);

/// [T,K] -> [floor((T-window)/stride)+1, K].
Tensor max_pool_1d(const Tensor& input, std::size_t window, std::size_t stride);

/// While alive, records how close the forward pass comes to a
/// non-differentiable point: the smallest |x| fed to relu and the smallest
/// non-zero gap between the largest and runner-up value of any max window.
/// Exact ties are ignored since they only arise from identical inputs.
/// It also hashes every relu sign and max argmax into a signature, so two
/// passes that took different linear pieces have different signatures.
/// Monitors nest; only the innermost one records.
class KinkMonitor {
public:
    KinkMonitor();
    ~KinkMonitor();
    KinkMonitor(const KinkMonitor&) = delete;
    KinkMonitor& operator=(const KinkMonitor&) = delete;

    double margin() const { return margin_; }
    std::uint64_t signature() const { return signature_; }

    void note(double distance) { margin_ = distance < margin_ ? distance : margin_; }
    void mix(std::uint64_t value) { signature_ = (signature_ ^ value) * 0x100000001b3ULL; }

private:
    double margin_;
    std::uint64_t signature_ = 0xcbf29ce484222325ULL;
    KinkMonitor* previous_;
};

/// Inverted dropout. Identity in eval mode or when p == 0.
Tensor dropout(const Tensor& x, double p, Mode mode, Rng* rng);

/// Mean over the batch of -log softmax(logits)[target]. logits is [B,C].
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> targets);

/// Row-wise softmax of [R,C] over the first `valid_columns` columns; the
/// remaining columns get probability exactly 0.
Tensor masked_softmax(const Tensor& scores, std::size_t valid_columns);

/// Per-row normalisation of [T,D] followed by the gain/bias affine map.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

/// Row lookup into table [V,D]. Rows for `pad_id` are zero and never receive
/// gradient.
Tensor gather_rows(const Tensor& table, std::span<const int> ids, int pad_id);

struct LstmParams {
    Tensor w_input;   // [4H, D], gate blocks ordered i, f, g, o
    Tensor w_hidden;  // [4H, H]
    Tensor bias;      // [4H]

    std::size_t hidden() const { return w_hidden.dim(1); }
    std::size_t input() const { return w_input.dim(1); }
};

struct LstmState {
    Tensor h;
    Tensor c;
};

/// Pointwise part of the LSTM update: gates [4H] (pre-activation) and c [H]
/// to the concatenation [h', c'] of shape [2H].
Tensor lstm_pointwise(const Tensor& gates, const Tensor& c);

LstmState lstm_cell(const Tensor& x, const Tensor& h, const Tensor& c, const LstmParams& params);

struct BiLstmLayerParams {
    LstmParams forward;
    LstmParams backward;
};

struct BiLstmOutput {
    Tensor outputs;  // [T, 2H] of the top layer
    Tensor final;    // [2H]: forward state at T-1, backward state at 0
};

BiLstmOutput bilstm(const Tensor& seq, const std::vector<BiLstmLayerParams>& layers, double dropout_p, Mode mode,
                    Rng* rng);

// Plain softmax of a vector, used outside the graph.
std::vector<double> softmax(std::span<const double> logits);

}  // namespace textheads
