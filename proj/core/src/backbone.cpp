#include "sra/backbone.hpp"

#include <cmath>
#include <stdexcept>

namespace sra {

std::string to_string(TapPoint p) { return p == TapPoint::post_block ? "post_block" : "pre_gate"; }

TapPoint parse_tap_point(const std::string& s) {
    if (s == "post_block") return TapPoint::post_block;
    if (s == "pre_gate") return TapPoint::pre_gate;
    throw std::invalid_argument("unknown tap point '" + s + "' (expected post_block or pre_gate)");
}

void ModelConfig::validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("ModelConfig: " + m); };
    if (input_height <= 0 || input_width <= 0 || channels <= 0) fail("input dimensions must be positive");
    if (patch_size <= 0) fail("patch_size must be positive");
    if (input_height % patch_size || input_width % patch_size)
        fail("input " + std::to_string(input_height) + "x" + std::to_string(input_width) +
             " not divisible by patch_size " + std::to_string(patch_size));
    if (depth < 2) fail("depth must be at least 2");
    if (hidden_dim <= 0 || num_heads <= 0) fail("hidden_dim and num_heads must be positive");
    if (hidden_dim % num_heads) fail("hidden_dim must be divisible by num_heads");
    if (hidden_dim % 4) fail("hidden_dim must be divisible by 4 for the 2-D position table");
    if (num_classes < 1) fail("num_classes must be positive");
    if (!(label_dropout_prob >= 0.0 && label_dropout_prob <= 1.0)) fail("label_dropout_prob outside [0, 1]");
    if (mlp_ratio < 1) fail("mlp_ratio must be positive");
    if (frequency_dim < 2 || frequency_dim % 2) fail("frequency_dim must be a positive even number");
}

ModelConfig ModelConfig::tiny() { return ModelConfig{}; }

ModelConfig ModelConfig::small() {
    ModelConfig c;
    c.depth = 12;
    c.hidden_dim = 256;
    c.num_heads = 8;
    return c;
}

ModelConfig ModelConfig::preset(const std::string& name) {
    if (name == "tiny") return tiny();
    if (name == "small") return small();
    throw std::invalid_argument("unknown model preset '" + name + "' (expected tiny or small)");
}

namespace {

std::vector<std::int64_t> patch_order(std::int64_t B, int C, int H, int W, int p) {
    // index[token-layout position] = image-layout position
    const int gh = H / p, gw = W / p;
    std::vector<std::int64_t> idx;
    idx.reserve(static_cast<std::size_t>(B) * C * H * W);
    for (std::int64_t b = 0; b < B; ++b)
        for (int gy = 0; gy < gh; ++gy)
            for (int gx = 0; gx < gw; ++gx)
                for (int c = 0; c < C; ++c)
                    for (int py = 0; py < p; ++py)
                        for (int px = 0; px < p; ++px)
                            idx.push_back(((b * C + c) * H + gy * p + py) * W + gx * p + px);
    return idx;
}

Tensor xavier_uniform(std::int64_t fan_in, std::int64_t fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor w(Shape{fan_in, fan_out});
    for (auto& v : w.values()) v = (2.0 * rng.uniform() - 1.0) * bound;
    return w;
}

Tensor normal_init(Shape shape, double stddev, Rng& rng) {
    Tensor w(std::move(shape));
    for (auto& v : w.values()) v = stddev * rng.normal();
    return w;
}

void sincos_1d(int dim, double pos, double* out) {
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double omega = 1.0 / std::pow(10000.0, static_cast<double>(i) / half);
        out[i] = std::sin(pos * omega);
        out[half + i] = std::cos(pos * omega);
    }
}

}  // namespace

Tensor patchify(const Tensor& images, int patch_size) {
    if (images.rank() != 4) throw std::invalid_argument("patchify: expected [B, C, H, W], got " + shape_string(images.shape()));
    const auto B = images.dim(0);
    const int C = static_cast<int>(images.dim(1)), H = static_cast<int>(images.dim(2)),
              W = static_cast<int>(images.dim(3));
    if (patch_size <= 0 || H % patch_size || W % patch_size)
        throw std::invalid_argument("patchify: " + std::to_string(H) + "x" + std::to_string(W) +
                                    " not divisible by patch size " + std::to_string(patch_size));
    const auto idx = patch_order(B, C, H, W, patch_size);
    const std::int64_t n = (H / patch_size) * (W / patch_size);
    Tensor out(Shape{B, n, static_cast<std::int64_t>(C) * patch_size * patch_size});
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = images[idx[i]];
    return out;
}

Tensor unpatchify(const Tensor& tokens, int channels, int height, int width, int patch_size) {
    if (tokens.rank() != 3) throw std::invalid_argument("unpatchify: expected [B, N, C*p*p]");
    if (patch_size <= 0 || height % patch_size || width % patch_size)
        throw std::invalid_argument("unpatchify: size not divisible by patch size");
    const auto B = tokens.dim(0);
    if (tokens.dim(1) != static_cast<std::int64_t>(height / patch_size) * (width / patch_size) ||
        tokens.dim(2) != static_cast<std::int64_t>(channels) * patch_size * patch_size)
        throw std::invalid_argument("unpatchify: token shape " + shape_string(tokens.shape()) +
                                    " inconsistent with image geometry");
    const auto idx = patch_order(B, channels, height, width, patch_size);
    Tensor out(Shape{B, channels, height, width});
    for (std::size_t i = 0; i < idx.size(); ++i) out[idx[i]] = tokens[i];
    return out;
}

Tensor timestep_frequency_embedding(std::span<const double> t, int dim) {
    if (dim < 2 || dim % 2) throw std::invalid_argument("frequency embedding dim must be even");
    const int half = dim / 2;
    Tensor out(Shape{static_cast<std::int64_t>(t.size()), dim});
    for (std::size_t b = 0; b < t.size(); ++b)
        for (int i = 0; i < half; ++i) {
            const double freq = std::exp(-std::log(10000.0) * i / half);
            out[b * dim + i] = std::cos(t[b] * freq);
            out[b * dim + half + i] = std::sin(t[b] * freq);
        }
    return out;
}

Tensor sincos_position_embedding(int dim, int grid_h, int grid_w) {
    if (dim % 4) throw std::invalid_argument("position embedding dim must be divisible by 4");
    Tensor out(Shape{static_cast<std::int64_t>(grid_h) * grid_w, dim});
    for (int y = 0; y < grid_h; ++y)
        for (int x = 0; x < grid_w; ++x) {
            double* row = out.data() + (static_cast<std::int64_t>(y) * grid_w + x) * dim;
            sincos_1d(dim / 2, static_cast<double>(x), row);
            sincos_1d(dim / 2, static_cast<double>(y), row + dim / 2);
        }
    return out;
}

std::vector<int> apply_label_dropout(std::span<const int> class_ids, double prob, int null_id, Rng& rng) {
    if (!(prob >= 0.0 && prob <= 1.0)) throw std::invalid_argument("label dropout probability outside [0, 1]");
    std::vector<int> out(class_ids.begin(), class_ids.end());
    for (auto& id : out)
        if (rng.uniform() < prob) id = null_id;
    return out;
}

DiffusionTransformer::DiffusionTransformer(ModelConfig config, std::uint64_t seed) : config_(config) {
    config_.validate();
    Rng rng(seed, streams::init);
    const std::int64_t D = config_.hidden_dim;
    const std::int64_t P = config_.patch_dim();
    const std::int64_t F = config_.frequency_dim;
    const std::int64_t hidden = D * config_.mlp_ratio;

    x_embed_w_ = params_.add("x_embed.weight", xavier_uniform(P, D, rng));
    x_embed_b_ = params_.add("x_embed.bias", Tensor(Shape{D}));
    t_fc1_w_ = params_.add("t_embed.fc1.weight", normal_init({F, D}, 0.02, rng));
    t_fc1_b_ = params_.add("t_embed.fc1.bias", Tensor(Shape{D}));
    t_fc2_w_ = params_.add("t_embed.fc2.weight", normal_init({D, D}, 0.02, rng));
    t_fc2_b_ = params_.add("t_embed.fc2.bias", Tensor(Shape{D}));
    y_table_ = params_.add("y_embed.table", normal_init({config_.num_classes + 1, D}, 0.02, rng));
    for (int i = 0; i < config_.depth; ++i) {
        const std::string p = "blocks." + std::to_string(i) + ".";
        BlockParams b{};
        b.adaln_w = params_.add(p + "adaln.weight", Tensor(Shape{D, 6 * D}));
        b.adaln_b = params_.add(p + "adaln.bias", Tensor(Shape{6 * D}));
        b.qkv_w = params_.add(p + "attn.qkv.weight", xavier_uniform(D, 3 * D, rng));
        b.qkv_b = params_.add(p + "attn.qkv.bias", Tensor(Shape{3 * D}));
        b.proj_w = params_.add(p + "attn.proj.weight", xavier_uniform(D, D, rng));
        b.proj_b = params_.add(p + "attn.proj.bias", Tensor(Shape{D}));
        b.fc1_w = params_.add(p + "mlp.fc1.weight", xavier_uniform(D, hidden, rng));
        b.fc1_b = params_.add(p + "mlp.fc1.bias", Tensor(Shape{hidden}));
        b.fc2_w = params_.add(p + "mlp.fc2.weight", xavier_uniform(hidden, D, rng));
        b.fc2_b = params_.add(p + "mlp.fc2.bias", Tensor(Shape{D}));
        blocks_.push_back(b);
    }
    final_adaln_w_ = params_.add("final.adaln.weight", Tensor(Shape{D, 2 * D}));
    final_adaln_b_ = params_.add("final.adaln.bias", Tensor(Shape{2 * D}));
    final_w_ = params_.add("final.linear.weight", Tensor(Shape{D, P}));
    final_b_ = params_.add("final.linear.bias", Tensor(Shape{P}));

    pos_embed_ = sincos_position_embedding(config_.hidden_dim, config_.grid_height(), config_.grid_width());
}

void DiffusionTransformer::randomize(Rng& rng, double stddev) {
    for (auto& p : params_)
        for (auto& v : p.value.values()) v = stddev * rng.normal();
}

ag::Var DiffusionTransformer::embed_timestep(ag::Tape& tape, std::span<const double> t) {
    auto freq = tape.constant(timestep_frequency_embedding(t, config_.frequency_dim));
    auto h = ag::silu(tape, ag::linear(tape, freq, param(tape, t_fc1_w_), param(tape, t_fc1_b_)));
    return ag::linear(tape, h, param(tape, t_fc2_w_), param(tape, t_fc2_b_));
}

ForwardOutput DiffusionTransformer::forward_with_taps(ag::Tape& tape, const Tensor& x_t, std::span<const double> t,
                                                      std::span<const int> class_ids,
                                                      const std::set<int>& tap_layers, bool compute_prediction) {
    if (x_t.rank() != 4 || x_t.dim(1) != config_.channels || x_t.dim(2) != config_.input_height ||
        x_t.dim(3) != config_.input_width)
        throw std::invalid_argument("forward: input shape " + shape_string(x_t.shape()) + " does not match model " +
                                    shape_string(config_.image_shape(-1)));
    const std::int64_t B = x_t.dim(0);
    if (static_cast<std::int64_t>(t.size()) != B || static_cast<std::int64_t>(class_ids.size()) != B)
        throw std::invalid_argument("forward: need one time value and one class id per sample");
    for (int id : class_ids)
        if (id < 0 || id > config_.num_classes)
            throw std::out_of_range("forward: class id " + std::to_string(id) + " outside [0, " +
                                    std::to_string(config_.num_classes) + "]");
    for (int layer : tap_layers)
        if (layer < 1 || layer > config_.depth)
            throw std::out_of_range("forward: tap layer " + std::to_string(layer) + " outside [1, " +
                                    std::to_string(config_.depth) + "]");

    const std::int64_t N = config_.tokens();
    const std::int64_t D = config_.hidden_dim;
    const int last_block = compute_prediction ? config_.depth : (tap_layers.empty() ? 0 : *tap_layers.rbegin());

    auto tokens = tape.constant(patchify(x_t, config_.patch_size));
    auto x = ag::linear(tape, tokens, param(tape, x_embed_w_), param(tape, x_embed_b_));
    x = ag::add_repeated_rows(tape, x, tape.constant_ref(pos_embed_));

    auto c = ag::add(tape, embed_timestep(tape, t), ag::embedding(tape, param(tape, y_table_), class_ids));
    auto c_act = ag::silu(tape, c);

    ForwardOutput out;
    for (int i = 0; i < last_block; ++i) {
        const auto& bp = blocks_[i];
        auto mod = ag::linear(tape, c_act, param(tape, bp.adaln_w), param(tape, bp.adaln_b));
        auto chunk = [&](int k) { return ag::columns(tape, mod, k * D, D); };
        auto h = ag::layer_norm_modulate(tape, x, chunk(0), chunk(1), N);
        auto qkv = ag::linear(tape, h, param(tape, bp.qkv_w), param(tape, bp.qkv_b));
        auto a = ag::attention(tape, qkv, B, N, config_.num_heads);
        a = ag::linear(tape, a, param(tape, bp.proj_w), param(tape, bp.proj_b));
        x = ag::gated_add(tape, x, chunk(2), a, N);

        h = ag::layer_norm_modulate(tape, x, chunk(3), chunk(4), N);
        auto f = ag::gelu(tape, ag::linear(tape, h, param(tape, bp.fc1_w), param(tape, bp.fc1_b)));
        f = ag::linear(tape, f, param(tape, bp.fc2_w), param(tape, bp.fc2_b));
        x = ag::gated_add(tape, x, chunk(5), f, N);

        if (tap_layers.count(i + 1)) out.taps.emplace(i + 1, config_.tap_point == TapPoint::post_block ? x : f);
    }

    if (compute_prediction) {
        auto mod = ag::linear(tape, c_act, param(tape, final_adaln_w_), param(tape, final_adaln_b_));
        auto h = ag::layer_norm_modulate(tape, x, ag::columns(tape, mod, 0, D), ag::columns(tape, mod, D, D), N);
        auto y = ag::linear(tape, h, param(tape, final_w_), param(tape, final_b_));
        // gather index: image position -> token position
        const auto fwd = patch_order(B, config_.channels, config_.input_height, config_.input_width,
                                     config_.patch_size);
        std::vector<std::int64_t> gather(fwd.size());
        for (std::size_t i = 0; i < fwd.size(); ++i)
            gather[static_cast<std::size_t>(fwd[i])] = static_cast<std::int64_t>(i);
        out.prediction = ag::permute_elements(tape, y, std::move(gather), x_t.shape());
    }
    return out;
}

Tensor DiffusionTransformer::predict(const Tensor& x_t, std::span<const double> t, std::span<const int> class_ids) {
    ag::Tape tape(ag::Tape::Mode::no_grad);
    return forward_with_taps(tape, x_t, t, class_ids, {}, true).prediction.value();
}

}  // namespace sra
