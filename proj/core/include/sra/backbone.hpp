#pragma once

// Patchified diffusion transformer with adaptive layer-norm conditioning
// (DiT-style) and per-layer residual-stream taps.

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "sra/autograd.hpp"
#include "sra/params.hpp"
#include "sra/rng.hpp"
#include "sra/tensor.hpp"

namespace sra {

/// Where a layer tap reads the block's activations.
enum class TapPoint {
    post_block,  // residual stream after the block's final residual addition
    pre_gate,    // the block's MLP branch output before gating and residual addition
};

std::string to_string(TapPoint p);
TapPoint parse_tap_point(const std::string& s);

struct ModelConfig {
    int input_height = 16;
    int input_width = 16;
    int channels = 1;
    int patch_size = 2;
    int depth = 6;
    int hidden_dim = 128;
    int num_heads = 4;
    int num_classes = 4;
    double label_dropout_prob = 0.1;
    int mlp_ratio = 4;
    int frequency_dim = 256;
    TapPoint tap_point = TapPoint::post_block;

    int grid_height() const { return input_height / patch_size; }
    int grid_width() const { return input_width / patch_size; }
    int tokens() const { return grid_height() * grid_width(); }
    int patch_dim() const { return channels * patch_size * patch_size; }
    int null_class() const { return num_classes; }
    Shape image_shape(std::int64_t batch) const { return {batch, channels, input_height, input_width}; }

    /// Throws std::invalid_argument on the first violated invariant.
    void validate() const;

    /// depth 6, width 128, 4 heads.
    static ModelConfig tiny();
    /// depth 12, width 256, 8 heads.
    static ModelConfig small();
    static ModelConfig preset(const std::string& name);

    bool operator==(const ModelConfig&) const = default;
};

/// [B, C, H, W] -> [B, N, C*p*p]; patches in row-major grid order, each
/// flattened as (channel, row, col).
Tensor patchify(const Tensor& images, int patch_size);
/// Inverse of patchify.
Tensor unpatchify(const Tensor& tokens, int channels, int height, int width, int patch_size);

/// Sinusoidal frequency features [cos | sin] of each time value, max period 10^4.
Tensor timestep_frequency_embedding(std::span<const double> t, int dim);

/// Fixed 2-D sine-cosine position table [grid_h * grid_w, dim].
Tensor sincos_position_embedding(int dim, int grid_h, int grid_w);

/// Replaces each label with `null_id` independently with probability `prob`.
/// Consumes exactly one uniform draw per label regardless of `prob`.
std::vector<int> apply_label_dropout(std::span<const int> class_ids, double prob, int null_id, Rng& rng);

struct ForwardOutput {
    ag::Var prediction;             // same shape as the input; empty when not requested
    std::map<int, ag::Var> taps;    // layer (1-based) -> [B, N, D]
};

class DiffusionTransformer {
public:
    /// Initialises with the DiT scheme: xavier-uniform linears, zero biases,
    /// zeroed adaLN modulations and a zeroed output head (initial output 0).
    DiffusionTransformer(ModelConfig config, std::uint64_t seed);

    const ModelConfig& config() const { return config_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    /// `t` holds per-sample model times, `class_ids` per-sample labels in
    /// [0, num_classes] (num_classes is the null label). When
    /// `compute_prediction` is false the pass stops after the deepest tap.
    ForwardOutput forward_with_taps(ag::Tape& tape, const Tensor& x_t, std::span<const double> t,
                                    std::span<const int> class_ids, const std::set<int>& tap_layers,
                                    bool compute_prediction = true);

    /// Gradient-free prediction.
    Tensor predict(const Tensor& x_t, std::span<const double> t, std::span<const int> class_ids);

    /// Timestep embedder output [B, D].
    ag::Var embed_timestep(ag::Tape& tape, std::span<const double> t);

    /// Re-draws every parameter from N(0, stddev^2); used to probe a model
    /// whose zero-initialised heads would otherwise mask gradients.
    void randomize(Rng& rng, double stddev);

private:
    struct BlockParams {
        std::size_t adaln_w, adaln_b, qkv_w, qkv_b, proj_w, proj_b, fc1_w, fc1_b, fc2_w, fc2_b;
    };

    ag::Var param(ag::Tape& tape, std::size_t idx) { return tape.parameter(params_[idx]); }

    ModelConfig config_;
    ParamStore params_;
    Tensor pos_embed_;
    std::size_t x_embed_w_, x_embed_b_, t_fc1_w_, t_fc1_b_, t_fc2_w_, t_fc2_b_, y_table_;
    std::vector<BlockParams> blocks_;
    std::size_t final_adaln_w_, final_adaln_b_, final_w_, final_b_;
};

}  // namespace sra
