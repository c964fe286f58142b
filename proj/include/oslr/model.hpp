#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "oslr/ops.hpp"
#include "oslr/rng.hpp"
#include "oslr/tape.hpp"
#include "oslr/tensor.hpp"

namespace oslr {

// How the query code is injected into the segmentation branch.
//   multi_scale:     tile + concat + 1x1 conv at every encoder stage
//   bottleneck_only: conditioning at the bottleneck alone, plain skips
//   cosine_tanh:     tanh(cosine) feature gating against a projected code
enum class FusionMode { multi_scale, bottleneck_only, cosine_tanh };

enum class InitMode { paper_gaussian, fan_in_scaled };

inline const char* to_string(FusionMode m) {
    switch (m) {
        case FusionMode::multi_scale: return "multi_scale";
        case FusionMode::bottleneck_only: return "bottleneck_only";
        case FusionMode::cosine_tanh: return "cosine_tanh";
    }
    return "?";
}

inline const char* to_string(InitMode m) {
    return m == InitMode::paper_gaussian ? "paper_gaussian" : "fan_in_scaled";
}

inline FusionMode fusion_mode_from_string(const std::string& s) {
    if (s == "multi_scale") return FusionMode::multi_scale;
    if (s == "bottleneck_only") return FusionMode::bottleneck_only;
    if (s == "cosine_tanh") return FusionMode::cosine_tanh;
    throw ShapeError("unknown fusion mode: " + s);
}

inline InitMode init_mode_from_string(const std::string& s) {
    if (s == "paper_gaussian") return InitMode::paper_gaussian;
    if (s == "fan_in_scaled") return InitMode::fan_in_scaled;
    throw ShapeError("unknown init mode: " + s);
}

struct ModelConfig {
    int query_size = 64;
    int target_size = 256;
    int num_stages = 5;
    std::vector<int> stage_channels{64, 128, 256, 512, 512};
    int latent_dim = 512;
    std::vector<int> cond_convs_per_stage{2, 2, 3, 3, 2, 1};
    int seg_convs_per_stage = 2;
    FusionMode fusion_mode = FusionMode::multi_scale;
    bool fuse_bottleneck = true;
    InitMode init_mode = InitMode::paper_gaussian;
    std::string precision = "single";

    int cond_stage_count() const { return static_cast<int>(cond_convs_per_stage.size()); }

    // Conditioning-net channels double from the first segmentation width and
    // saturate at the latent dimension, ending exactly there.
    std::vector<int> cond_channels() const {
        std::vector<int> ch(static_cast<size_t>(cond_stage_count()));
        for (int k = 0; k < cond_stage_count(); ++k)
            ch[static_cast<size_t>(k)] = std::min(stage_channels[0] << k, latent_dim);
        return ch;
    }

    void validate() const {
        if (num_stages < 1 || static_cast<int>(stage_channels.size()) != num_stages)
            throw ShapeError("config: stage_channels must list one width per stage");
        for (int c : stage_channels)
            if (c < 1) throw ShapeError("config: stage channels must be positive");
        if (target_size < 1 || target_size % (1 << num_stages) != 0)
            throw ShapeError("config: target_size must be divisible by 2^num_stages");
        int stages = cond_stage_count();
        if (stages < 1 || query_size != (1 << stages))
            throw ShapeError(
                "config: query_size must reduce to 1x1 through the conditioning pools");
        for (int c : cond_convs_per_stage)
            if (c < 1) throw ShapeError("config: cond conv counts must be positive");
        if (seg_convs_per_stage < 1)
            throw ShapeError("config: seg_convs_per_stage must be positive");
        if (latent_dim < 1) throw ShapeError("config: latent_dim must be positive");
        if (cond_channels().back() != latent_dim)
            throw ShapeError("config: conditioning net cannot reach latent_dim " +
                             std::to_string(latent_dim));
        if (precision != "single" && precision != "double")
            throw ShapeError("config: precision must be single or double");
    }

    static ModelConfig paper() { return ModelConfig{}; }

    static ModelConfig desk() {
        ModelConfig c;
        c.query_size = 16;
        c.target_size = 64;
        c.num_stages = 4;
        c.stage_channels = {8, 16, 32, 64};
        c.latent_dim = 64;
        c.cond_convs_per_stage = {1, 1, 1, 1};
        c.init_mode = InitMode::fan_in_scaled;
        return c;
    }

    // Small enough for finite-difference checks through the whole network.
    static ModelConfig tiny() {
        ModelConfig c;
        c.query_size = 8;
        c.target_size = 16;
        c.num_stages = 2;
        c.stage_channels = {4, 8};
        c.latent_dim = 8;
        c.cond_convs_per_stage = {1, 1, 1};
        c.init_mode = InitMode::fan_in_scaled;
        return c;
    }
};

// Per-stage feature maps of the segmentation encoder, pre-pooling, plus the
// post-pool bottleneck.
template <typename T>
struct StageFeatures {
    std::vector<Tensor<T>> stages;
    Tensor<T> bottleneck;
};

template <typename T>
struct DecoderStage {
    ConvParams<T> up;
    std::vector<ConvParams<T>> convs;
};

// All learnable tensors, both as structure and as a flat name -> tensor list.
// The flat order is fixed and drives the checkpoint layout.
template <typename T>
struct Parameters {
    std::vector<std::vector<ConvParams<T>>> cond_stages;
    std::vector<std::vector<ConvParams<T>>> enc_stages;
    std::vector<ConvParams<T>> fuse_stages;            // empty for bottleneck_only
    std::optional<ConvParams<T>> fuse_bottleneck_conv; // absent when bottleneck is not fused
    std::vector<DecoderStage<T>> dec_stages;           // index 0 = deepest stage
    ConvParams<T> out_conv;

    std::vector<std::pair<std::string, Tensor<T>>> named;

    std::vector<Tensor<T>> tensors() const {
        std::vector<Tensor<T>> out;
        out.reserve(named.size());
        for (const auto& kv : named) out.push_back(kv.second);
        return out;
    }

    int64_t count() const {
        int64_t n = 0;
        for (const auto& kv : named) n += kv.second.numel();
        return n;
    }

    void set_requires_grad(bool on) {
        for (auto& kv : named) kv.second.set_requires_grad(on);
    }

    void zero_grad() {
        for (auto& kv : named) kv.second.zero_grad();
    }
};

namespace detail {

template <typename T>
Tensor<T> init_weight(Shape shape, InitMode mode, Pcg32& rng) {
    Tensor<T> w = Tensor<T>::zeros(shape);
    int64_t fan_in = 1;
    for (size_t i = 0; i + 1 < shape.size(); ++i) fan_in *= shape[i];
    if (mode == InitMode::paper_gaussian) {
        for (int64_t i = 0; i < w.numel(); ++i)
            w.at(i) = static_cast<T>(0.01 * rng.gaussian());
    } else {
        double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
        for (int64_t i = 0; i < w.numel(); ++i)
            w.at(i) = static_cast<T>(rng.uniform(-limit, limit));
    }
    return w;
}

template <typename T>
ConvParams<T> make_conv(Parameters<T>& params, const std::string& name, int k, int in_c, int out_c,
                        InitMode mode, Pcg32& rng) {
    ConvParams<T> conv;
    conv.weights = init_weight<T>({k, k, in_c, out_c}, mode, rng);
    conv.bias = Tensor<T>::zeros({out_c});
    conv.stride = 1;
    conv.padding = Padding::same;
    params.named.emplace_back(name + ".weight", conv.weights);
    params.named.emplace_back(name + ".bias", conv.bias);
    return conv;
}

} // namespace detail

template <typename T>
Parameters<T> init_parameters(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    Pcg32 rng(mix_seed({seed, 0x70617261756d73ull}));
    Parameters<T> p;

    std::vector<int> cch = cfg.cond_channels();
    int in_c = 3;
    for (int s = 0; s < cfg.cond_stage_count(); ++s) {
        std::vector<ConvParams<T>> stage;
        for (int i = 0; i < cfg.cond_convs_per_stage[static_cast<size_t>(s)]; ++i) {
            std::string name = "cond.stage" + std::to_string(s + 1) + ".conv" + std::to_string(i + 1);
            stage.push_back(detail::make_conv(p, name, 3, in_c, cch[static_cast<size_t>(s)],
                                              cfg.init_mode, rng));
            in_c = cch[static_cast<size_t>(s)];
        }
        p.cond_stages.push_back(std::move(stage));
    }

    in_c = 3;
    for (int s = 0; s < cfg.num_stages; ++s) {
        std::vector<ConvParams<T>> stage;
        for (int i = 0; i < cfg.seg_convs_per_stage; ++i) {
            std::string name = "enc.stage" + std::to_string(s + 1) + ".conv" + std::to_string(i + 1);
            stage.push_back(detail::make_conv(p, name, 3, in_c,
                                              cfg.stage_channels[static_cast<size_t>(s)],
                                              cfg.init_mode, rng));
            in_c = cfg.stage_channels[static_cast<size_t>(s)];
        }
        p.enc_stages.push_back(std::move(stage));
    }

    int bottleneck_c = cfg.stage_channels.back();
    if (cfg.fusion_mode == FusionMode::multi_scale) {
        for (int s = 0; s < cfg.num_stages; ++s) {
            int cs = cfg.stage_channels[static_cast<size_t>(s)];
            p.fuse_stages.push_back(detail::make_conv(
                p, "fuse.stage" + std::to_string(s + 1), 1, cs + cfg.latent_dim, cs,
                cfg.init_mode, rng));
        }
        if (cfg.fuse_bottleneck)
            p.fuse_bottleneck_conv = detail::make_conv(p, "fuse.bottleneck", 1,
                                                       bottleneck_c + cfg.latent_dim,
                                                       bottleneck_c, cfg.init_mode, rng);
    } else if (cfg.fusion_mode == FusionMode::bottleneck_only) {
        p.fuse_bottleneck_conv = detail::make_conv(p, "fuse.bottleneck", 1,
                                                   bottleneck_c + cfg.latent_dim, bottleneck_c,
                                                   cfg.init_mode, rng);
    } else { // cosine_tanh: project the code to each stage's width
        for (int s = 0; s < cfg.num_stages; ++s) {
            int cs = cfg.stage_channels[static_cast<size_t>(s)];
            p.fuse_stages.push_back(detail::make_conv(p, "proj.stage" + std::to_string(s + 1), 1,
                                                      cfg.latent_dim, cs, cfg.init_mode, rng));
        }
        if (cfg.fuse_bottleneck)
            p.fuse_bottleneck_conv = detail::make_conv(p, "proj.bottleneck", 1, cfg.latent_dim,
                                                       bottleneck_c, cfg.init_mode, rng);
    }

    // Decoder mirrors the encoder, deepest stage first.
    int d_in = bottleneck_c;
    for (int s = cfg.num_stages - 1; s >= 0; --s) {
        int cs = cfg.stage_channels[static_cast<size_t>(s)];
        DecoderStage<T> stage;
        std::string base = "dec.stage" + std::to_string(s + 1);
        stage.up = detail::make_conv(p, base + ".up", 2, d_in, cs, cfg.init_mode, rng);
        int conv_in = 2 * cs; // up-conv output concatenated with the skip
        for (int i = 0; i < cfg.seg_convs_per_stage; ++i) {
            stage.convs.push_back(detail::make_conv(p, base + ".conv" + std::to_string(i + 1), 3,
                                                    conv_in, cs, cfg.init_mode, rng));
            conv_in = cs;
        }
        p.dec_stages.push_back(std::move(stage));
        d_in = cs;
    }

    p.out_conv = detail::make_conv(p, "out", 1, cfg.stage_channels[0], 1, cfg.init_mode, rng);
    return p;
}

// --- fusion ops -------------------------------------------------------------

// Tile the code across the stage grid, concatenate on channels, mix with a
// learned 1x1 convolution, ReLU. The output has the stage's channel count and
// acts as a per-position match map between the query code and the feature.
template <typename T>
Tensor<T> fuse_stage(const Tensor<T>& f, const Tensor<T>& z, const ConvParams<T>& mix,
                     Tape<T>* tape = nullptr) {
    if (mix.in_channels() != f.dim(2) + z.dim(2))
        throw ShapeError("fuse_stage: 1x1 weights expect " + std::to_string(mix.in_channels()) +
                         " channels, got " + std::to_string(f.dim(2) + z.dim(2)));
    Tensor<T> tiled = tile_spatial(z, f.dim(0), f.dim(1), tape);
    Tensor<T> cat = concat_channels(f, tiled, tape);
    return relu(conv2d(cat, mix, tape), tape);
}

// Ablation alternative: project the code to the stage width, gate the feature
// map by tanh of the per-position cosine similarity.
template <typename T>
Tensor<T> fuse_stage_cosine(const Tensor<T>& f, const Tensor<T>& z, const ConvParams<T>& proj,
                            Tape<T>* tape = nullptr) {
    Tensor<T> code = conv2d(z, proj, tape); // 1x1xC_s
    return cosine_match(f, code, tape);
}

// --- model ------------------------------------------------------------------

template <typename T>
struct LogoModel {
    ModelConfig cfg;
    Parameters<T> params;

    // Query image -> 1x1xD latent code.
    Tensor<T> encode_query(const Tensor<T>& query, Tape<T>* tape = nullptr) const {
        if (query.ndim() != 3 || query.dim(0) != cfg.query_size ||
            query.dim(1) != cfg.query_size || query.dim(2) != 3)
            throw ShapeError("encode_query: expected " + std::to_string(cfg.query_size) + "x" +
                             std::to_string(cfg.query_size) + "x3, got " +
                             shape_str(query.shape()));
        Tensor<T> x = query;
        for (const auto& stage : params.cond_stages) {
            for (const ConvParams<T>& conv : stage) x = relu(conv2d(x, conv, tape), tape);
            x = maxpool2x2(x, tape);
        }
        return x;
    }

    // Target image -> per-stage features (pre-pool) plus bottleneck.
    StageFeatures<T> encode_target(const Tensor<T>& target, Tape<T>* tape = nullptr) const {
        if (target.ndim() != 3 || target.dim(0) != cfg.target_size ||
            target.dim(1) != cfg.target_size || target.dim(2) != 3)
            throw ShapeError("encode_target: expected " + std::to_string(cfg.target_size) + "x" +
                             std::to_string(cfg.target_size) + "x3, got " +
                             shape_str(target.shape()));
        StageFeatures<T> out;
        Tensor<T> x = target;
        for (const auto& stage : params.enc_stages) {
            for (const ConvParams<T>& conv : stage) x = relu(conv2d(x, conv, tape), tape);
            out.stages.push_back(x);
            x = maxpool2x2(x, tape);
        }
        out.bottleneck = x;
        return out;
    }

    // Applies the configured conditioning to every skip and to the bottleneck.
    StageFeatures<T> fuse_features(const StageFeatures<T>& feats, const Tensor<T>& z,
                                   Tape<T>* tape = nullptr) const {
        StageFeatures<T> fused;
        fused.stages.reserve(feats.stages.size());
        for (size_t s = 0; s < feats.stages.size(); ++s) {
            switch (cfg.fusion_mode) {
                case FusionMode::multi_scale:
                    fused.stages.push_back(fuse_stage(feats.stages[s], z, params.fuse_stages[s], tape));
                    break;
                case FusionMode::cosine_tanh:
                    fused.stages.push_back(
                        fuse_stage_cosine(feats.stages[s], z, params.fuse_stages[s], tape));
                    break;
                case FusionMode::bottleneck_only:
                    fused.stages.push_back(feats.stages[s]);
                    break;
            }
        }
        fused.bottleneck = feats.bottleneck;
        if (params.fuse_bottleneck_conv) {
            if (cfg.fusion_mode == FusionMode::cosine_tanh)
                fused.bottleneck =
                    fuse_stage_cosine(feats.bottleneck, z, *params.fuse_bottleneck_conv, tape);
            else
                fused.bottleneck =
                    fuse_stage(feats.bottleneck, z, *params.fuse_bottleneck_conv, tape);
        }
        return fused;
    }

    // Decoder over the fused features; logits at full target resolution.
    Tensor<T> decode(const StageFeatures<T>& fused, Tape<T>* tape = nullptr) const {
        if (fused.stages.size() != static_cast<size_t>(cfg.num_stages))
            throw ShapeError("decode: missing fused stage features");
        Tensor<T> d = fused.bottleneck;
        for (size_t i = 0; i < params.dec_stages.size(); ++i) {
            const DecoderStage<T>& stage = params.dec_stages[i];
            size_t s = fused.stages.size() - 1 - i;
            d = relu(conv2d(upsample_nearest2x(d, tape), stage.up, tape), tape);
            d = concat_channels(d, fused.stages[s], tape);
            for (const ConvParams<T>& conv : stage.convs) d = relu(conv2d(d, conv, tape), tape);
        }
        return conv2d(d, params.out_conv, tape);
    }

    Tensor<T> predict_logits(const Tensor<T>& query, const Tensor<T>& target,
                             Tape<T>* tape = nullptr) const {
        Tensor<T> z = encode_query(query, tape);
        StageFeatures<T> feats = encode_target(target, tape);
        StageFeatures<T> fused = fuse_features(feats, z, tape);
        return decode(fused, tape);
    }

    // Per-pixel probability that the query's logo covers the pixel.
    Tensor<T> predict_mask(const Tensor<T>& query, const Tensor<T>& target,
                           Tape<T>* tape = nullptr) const {
        return sigmoid(predict_logits(query, target, tape), tape);
    }
};

template <typename T>
LogoModel<T> make_model(const ModelConfig& cfg, uint64_t seed) {
    LogoModel<T> m;
    m.cfg = cfg;
    m.params = init_parameters<T>(cfg, seed);
    return m;
}

} // namespace oslr
