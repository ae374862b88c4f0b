// Learnable components: the masked-autoencoder image tower, the tabular
// tower, the shared-space projectors, and the stage-III task decoders.
// Everything lives in one named-parameter bundle so checkpoints carry all
// weights across stages.
#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "cinetab/ops.hpp"
#include "cinetab/patching.hpp"
#include "cinetab/tabular.hpp"

namespace cinetab {

// ---------------------------------------------------------------------------
// Configs
// ---------------------------------------------------------------------------
struct ImageModelConfig {
    std::size_t dim = 64;            // paper-scale: 1024
    std::size_t encoder_layers = 2;  // paper-scale: 6
    std::size_t decoder_layers = 1;  // paper-scale: 2
    std::size_t heads = 4;           // paper-scale: 5
    std::size_t ff_expansion = 4;
    PatchExtents patch{8, 8, 5};

    void validate() const {
        if (dim < 9) throw ConfigError("image model: dim must be at least 9");
        if (heads == 0 || dim % heads != 0)
            throw ConfigError("image model: dim " + std::to_string(dim) +
                              " not divisible by heads " + std::to_string(heads));
        if (encoder_layers < 1 || decoder_layers < 1)
            throw ConfigError("image model: encoder and decoder need at least one layer");
        if ((patch.x & (patch.x - 1)) != 0 || patch.x != patch.y)
            throw ConfigError("image model: spatial patch extents must be equal powers of two");
    }
};

struct TabularModelConfig {
    std::size_t dim = 65;  // paper-scale: 1025
    std::size_t layers = 2;
    std::size_t heads = 5;

    void validate() const {
        if (dim < 9) throw ConfigError("tabular model: dim must be at least 9");
        if (heads == 0 || dim % heads != 0)
            throw ConfigError("tabular model: dim " + std::to_string(dim) +
                              " not divisible by heads " + std::to_string(heads));
        if (layers < 1) throw ConfigError("tabular model: need at least one layer");
    }
};

struct ProjectorConfig {
    std::size_t out_dim = 128;
};

struct SegDecoderConfig {
    std::size_t base_width = 48;  // paper-scale: 576
    std::size_t classes = kNumTissueClasses;
};

struct TaskDecoderConfig {
    std::size_t trunk_width = 256;
};

// ---------------------------------------------------------------------------
// Named parameter store
// ---------------------------------------------------------------------------
template <typename T>
class ParamStore {
public:
    enum class Init { XavierUniform, Zero, One, SmallNormal };

    explicit ParamStore(std::uint64_t seed = 0) : rng_(derive_seed(seed, Stream::InitWeights, 0)) {}

    Tensor<T> create(const std::string& name, Shape shape, Init init) {
        std::vector<T> data(numel(shape), T(0));
        switch (init) {
            case Init::Zero:
                break;
            case Init::One:
                std::fill(data.begin(), data.end(), T(1));
                break;
            case Init::SmallNormal:
                for (auto& v : data) v = static_cast<T>(rng_.normal(0.0, 0.02));
                break;
            case Init::XavierUniform: {
                const std::size_t fan_in = shape.size() >= 2 ? shape[0] : shape.back();
                const std::size_t fan_out = shape.size() >= 2 ? shape[1] : shape.back();
                const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
                for (auto& v : data) v = static_cast<T>(rng_.uniform(-limit, limit));
                break;
            }
        }
        Tensor<T> t = Tensor<T>::from_data(std::move(shape), std::move(data), true);
        if (index_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
        index_[name] = entries_.size();
        entries_.push_back({name, t});
        return t;
    }

    const std::vector<std::pair<std::string, Tensor<T>>>& entries() const { return entries_; }

    Tensor<T> find(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
        return entries_[it->second].second;
    }

    std::vector<Tensor<T>> tensors() const {
        std::vector<Tensor<T>> out;
        out.reserve(entries_.size());
        for (const auto& [_, t] : entries_) out.push_back(t);
        return out;
    }

    std::size_t total_parameters() const {
        std::size_t n = 0;
        for (const auto& [_, t] : entries_) n += t.size();
        return n;
    }

private:
    Rng rng_;
    std::vector<std::pair<std::string, Tensor<T>>> entries_;
    std::map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Transformer block (pre-norm)
// ---------------------------------------------------------------------------
template <typename T>
struct TransformerBlock {
    ops::AttentionWeights<T> attn;
    Tensor<T> ln1_g, ln1_b, ln2_g, ln2_b;
    Tensor<T> ff1_w, ff1_b, ff2_w, ff2_b;
    std::size_t heads = 1;

    static TransformerBlock create(ParamStore<T>& ps, const std::string& prefix, std::size_t dim,
                                   std::size_t heads, std::size_t ff_expansion) {
        using I = typename ParamStore<T>::Init;
        TransformerBlock b;
        b.heads = heads;
        b.attn.wq = ps.create(prefix + ".attn.wq", {dim, dim}, I::XavierUniform);
        b.attn.wk = ps.create(prefix + ".attn.wk", {dim, dim}, I::XavierUniform);
        b.attn.wv = ps.create(prefix + ".attn.wv", {dim, dim}, I::XavierUniform);
        b.attn.wo = ps.create(prefix + ".attn.wo", {dim, dim}, I::XavierUniform);
        b.attn.bq = ps.create(prefix + ".attn.bq", {dim}, I::Zero);
        b.attn.bk = ps.create(prefix + ".attn.bk", {dim}, I::Zero);
        b.attn.bv = ps.create(prefix + ".attn.bv", {dim}, I::Zero);
        b.attn.bo = ps.create(prefix + ".attn.bo", {dim}, I::Zero);
        b.ln1_g = ps.create(prefix + ".ln1.gain", {dim}, I::One);
        b.ln1_b = ps.create(prefix + ".ln1.bias", {dim}, I::Zero);
        b.ln2_g = ps.create(prefix + ".ln2.gain", {dim}, I::One);
        b.ln2_b = ps.create(prefix + ".ln2.bias", {dim}, I::Zero);
        const std::size_t hidden = dim * ff_expansion;
        b.ff1_w = ps.create(prefix + ".ff1.w", {dim, hidden}, I::XavierUniform);
        b.ff1_b = ps.create(prefix + ".ff1.b", {hidden}, I::Zero);
        b.ff2_w = ps.create(prefix + ".ff2.w", {hidden, dim}, I::XavierUniform);
        b.ff2_b = ps.create(prefix + ".ff2.b", {dim}, I::Zero);
        return b;
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        const T eps = static_cast<T>(1e-5);
        Tensor<T> h = ops::add(
            x, ops::multi_head_attention(ops::layer_norm(x, ln1_g, ln1_b, eps), attn, heads));
        Tensor<T> ff = ops::add_rows(
            ops::matmul(ops::gelu(ops::add_rows(
                            ops::matmul(ops::layer_norm(h, ln2_g, ln2_b, eps), ff1_w), ff1_b)),
                        ff2_w),
            ff2_b);
        return ops::add(h, ff);
    }
};

// ---------------------------------------------------------------------------
// Image tower
// ---------------------------------------------------------------------------
template <typename T>
struct ImageModel {
    ImageModelConfig cfg;
    Tensor<T> patch_kernel, patch_bias;  // tokenizer, trained in every stage
    std::vector<TransformerBlock<T>> encoder;
    Tensor<T> enc_norm_g, enc_norm_b;
    Tensor<T> mask_token;
    std::vector<TransformerBlock<T>> decoder;
    Tensor<T> dec_norm_g, dec_norm_b;
    Tensor<T> recon_w, recon_b;

    static ImageModel create(const ImageModelConfig& cfg, ParamStore<T>& ps) {
        cfg.validate();
        using I = typename ParamStore<T>::Init;
        ImageModel m;
        m.cfg = cfg;
        const std::size_t plen = cfg.patch.pixels();
        m.patch_kernel = ps.create("image.patch.kernel", {cfg.dim, plen}, I::XavierUniform);
        m.patch_bias = ps.create("image.patch.bias", {cfg.dim}, I::Zero);
        for (std::size_t l = 0; l < cfg.encoder_layers; ++l)
            m.encoder.push_back(TransformerBlock<T>::create(
                ps, "image.enc." + std::to_string(l), cfg.dim, cfg.heads, cfg.ff_expansion));
        m.enc_norm_g = ps.create("image.enc_norm.gain", {cfg.dim}, I::One);
        m.enc_norm_b = ps.create("image.enc_norm.bias", {cfg.dim}, I::Zero);
        m.mask_token = ps.create("image.mask_token", {cfg.dim}, I::SmallNormal);
        for (std::size_t l = 0; l < cfg.decoder_layers; ++l)
            m.decoder.push_back(TransformerBlock<T>::create(
                ps, "image.dec." + std::to_string(l), cfg.dim, cfg.heads, cfg.ff_expansion));
        m.dec_norm_g = ps.create("image.dec_norm.gain", {cfg.dim}, I::One);
        m.dec_norm_b = ps.create("image.dec_norm.bias", {cfg.dim}, I::Zero);
        m.recon_w = ps.create("image.recon.w", {cfg.dim, plen}, I::XavierUniform);
        m.recon_b = ps.create("image.recon.b", {plen}, I::Zero);
        return m;
    }
};

template <typename T>
struct EncodeResult {
    Tensor<T> latent;                      // [L_visible x dim], final layer-normed
    std::vector<Tensor<T>> layer_outputs;  // per encoder layer, for skip taps
};

// Adds the positional embedding, drops masked tokens, runs the encoder.
template <typename T>
EncodeResult<T> image_encode(const ImageModel<T>& m, const PatchGrid& grid, const Tensor<T>& pe,
                             const MaskPlan& plan) {
    require(pe.shape().size() == 2 && pe.dim(0) == grid.total && pe.dim(1) == m.cfg.dim,
            "image_encode: positional embedding rows must align with token coordinates");
    require(plan.visible.size() + plan.masked.size() == grid.total,
            "image_encode: mask plan does not cover the token sequence (" +
                std::to_string(plan.visible.size() + plan.masked.size()) + " vs " +
                std::to_string(grid.total) + ")");
    Tensor<T> tokens = token_project(grid, m.patch_kernel, m.patch_bias);
    Tensor<T> x = ops::add(tokens, pe);
    if (plan.visible.size() != grid.total) x = ops::gather_rows(x, plan.visible);
    EncodeResult<T> out;
    for (const auto& block : m.encoder) {
        x = block.forward(x);
        out.layer_outputs.push_back(x);
    }
    out.latent = ops::layer_norm(x, m.enc_norm_g, m.enc_norm_b, static_cast<T>(1e-5));
    return out;
}

// Fills masked positions with the learned mask token, re-adds positional
// embeddings, runs the decoder, and predicts every patch's pixels.
template <typename T>
Tensor<T> image_decode_reconstruct(const ImageModel<T>& m, const Tensor<T>& latent,
                                   const MaskPlan& plan, const Tensor<T>& pe) {
    const std::size_t total = plan.visible.size() + plan.masked.size();
    require(latent.dim(0) == plan.visible.size(),
            "image_decode_reconstruct: latent rows must match the plan's visible set");
    require(pe.dim(0) == total, "image_decode_reconstruct: positional embedding length mismatch");
    Tensor<T> full;
    if (plan.masked.empty()) {
        full = latent;
    } else {
        Tensor<T> mask_rows = ops::tile_rows(m.mask_token, plan.masked.size());
        Tensor<T> stacked = ops::concat_rows<T>({latent, mask_rows});
        // stacked row r corresponds to original index visible[r] or
        // masked[r - n_visible]; invert that permutation
        std::vector<std::size_t> inverse(total);
        for (std::size_t r = 0; r < plan.visible.size(); ++r) inverse[plan.visible[r]] = r;
        for (std::size_t r = 0; r < plan.masked.size(); ++r)
            inverse[plan.masked[r]] = plan.visible.size() + r;
        full = ops::gather_rows(stacked, inverse);
    }
    Tensor<T> x = ops::add(full, pe);
    for (const auto& block : m.decoder) x = block.forward(x);
    x = ops::layer_norm(x, m.dec_norm_g, m.dec_norm_b, static_cast<T>(1e-5));
    return ops::add_rows(ops::matmul(x, m.recon_w), m.recon_b);
}

// ---------------------------------------------------------------------------
// Tabular tower
// ---------------------------------------------------------------------------
template <typename T>
struct TabularModel {
    TabularModelConfig cfg;
    TabularSchema schema;
    std::vector<Tensor<T>> num_scale, num_bias;  // slot per feature; unused slots undefined
    std::vector<Tensor<T>> lookup;               // [cardinality+1 x dim] per binary/categorical
    std::vector<TransformerBlock<T>> blocks;
    Tensor<T> norm_g, norm_b;

    static TabularModel create(const TabularModelConfig& cfg, const TabularSchema& schema,
                               ParamStore<T>& ps) {
        cfg.validate();
        using I = typename ParamStore<T>::Init;
        TabularModel m;
        m.cfg = cfg;
        m.schema = schema;
        m.num_scale.resize(schema.size());
        m.num_bias.resize(schema.size());
        m.lookup.resize(schema.size());
        for (std::size_t f = 0; f < schema.size(); ++f) {
            const auto& d = schema.features[f];
            const std::string base = "tabular.embed." + std::to_string(f);
            if (d.kind == FeatureKind::Numerical) {
                m.num_scale[f] = ps.create(base + ".scale", {cfg.dim}, I::SmallNormal);
                m.num_bias[f] = ps.create(base + ".bias", {cfg.dim}, I::SmallNormal);
            } else {
                // one reserved row past the cardinality for imputation fallback
                m.lookup[f] = ps.create(base + ".lookup", {d.lookup_cardinality() + 1, cfg.dim},
                                        I::SmallNormal);
            }
        }
        for (std::size_t l = 0; l < cfg.layers; ++l)
            m.blocks.push_back(TransformerBlock<T>::create(ps, "tabular.enc." + std::to_string(l),
                                                           cfg.dim, cfg.heads, 4));
        m.norm_g = ps.create("tabular.enc_norm.gain", {cfg.dim}, I::One);
        m.norm_b = ps.create("tabular.enc_norm.bias", {cfg.dim}, I::Zero);
        return m;
    }
};

// Embeds one (normalized) record: numerical tokens value*scale_f + bias_f,
// binary/categorical tokens from the per-feature lookup, concatenated in
// schema order. No positional embedding is added.
template <typename T>
Tensor<T> tabular_embed(const TabularModel<T>& m, const TabularRecord& record) {
    require(record.values.size() == m.schema.size(),
            "tabular_embed: record length does not match schema");
    std::vector<Tensor<T>> rows;
    rows.reserve(m.schema.size());
    for (std::size_t f = 0; f < m.schema.size(); ++f) {
        const auto& d = m.schema.features[f];
        if (d.kind == FeatureKind::Numerical) {
            Tensor<T> tok = ops::add(
                ops::mul_scalar(m.num_scale[f], static_cast<T>(record.values[f])), m.num_bias[f]);
            rows.push_back(ops::reshape(tok, {1, m.cfg.dim}));
        } else {
            // value == cardinality selects the reserved imputation row
            const double v = record.values[f];
            if (v < 0 || v != std::floor(v) ||
                v > static_cast<double>(d.lookup_cardinality()))
                throw ConfigError("tabular_embed: categorical value out of range for '" + d.name +
                                  "'");
            rows.push_back(ops::gather_rows(m.lookup[f], {static_cast<std::size_t>(v)}));
        }
    }
    return ops::concat_rows(rows);
}

// Shape-preserving transformer pass over the feature tokens; no masking.
template <typename T>
Tensor<T> tabular_encode(const TabularModel<T>& m, const Tensor<T>& embedded) {
    Tensor<T> x = embedded;
    for (const auto& block : m.blocks) x = block.forward(x);
    return ops::layer_norm(x, m.norm_g, m.norm_b, static_cast<T>(1e-5));
}

// ---------------------------------------------------------------------------
// Projection into the shared space
// ---------------------------------------------------------------------------
template <typename T>
struct Projector {
    Tensor<T> w, b;  // [dim x out], [out]

    static Projector create(ParamStore<T>& ps, const std::string& prefix, std::size_t in_dim,
                            std::size_t out_dim) {
        using I = typename ParamStore<T>::Init;
        Projector p;
        p.w = ps.create(prefix + ".w", {in_dim, out_dim}, I::XavierUniform);
        p.b = ps.create(prefix + ".b", {out_dim}, I::Zero);
        return p;
    }
};

// Average pooling over tokens followed by the affine projection: [1 x out].
template <typename T>
Tensor<T> pool_project(const Tensor<T>& tokens, const Projector<T>& proj) {
    require(tokens.dim(0) > 0, "pool_project: empty token sequence");
    Tensor<T> pooled = ops::reshape(ops::mean_rows(tokens), {std::size_t{1}, tokens.dim(1)});
    return ops::add_rows(ops::matmul(pooled, proj.w), proj.b);
}

// ---------------------------------------------------------------------------
// Segmentation decoder (per-plane 2D+T maps with encoder skip taps)
// ---------------------------------------------------------------------------
template <typename T>
struct SegDecoder {
    SegDecoderConfig cfg;
    std::size_t n_taps = 0, levels = 0, patch_t = 0;
    Tensor<T> fuse_w, fuse_b;
    std::vector<Tensor<T>> up_w, up_b;
    Tensor<T> head_w, head_b;

    static SegDecoder create(const SegDecoderConfig& cfg, const ImageModelConfig& img,
                             ParamStore<T>& ps) {
        using I = typename ParamStore<T>::Init;
        SegDecoder d;
        d.cfg = cfg;
        d.patch_t = img.patch.t;
        d.levels = static_cast<std::size_t>(std::round(std::log2(img.patch.x)));
        // evenly spaced skip taps over the encoder depth, at most three
        d.n_taps = std::min<std::size_t>(img.encoder_layers, 3);
        const std::size_t in_ch = img.dim * d.n_taps;
        d.fuse_w = ps.create("seg.fuse.w", {cfg.base_width, in_ch, 1, 1, 1}, I::XavierUniform);
        d.fuse_b = ps.create("seg.fuse.b", {cfg.base_width}, I::Zero);
        std::size_t w = cfg.base_width;
        for (std::size_t l = 0; l < d.levels; ++l) {
            const std::size_t w_next = std::max<std::size_t>(w / 2, cfg.classes);
            d.up_w.push_back(ps.create("seg.up" + std::to_string(l) + ".w",
                                       {w_next, w, 1, 3, 3}, I::XavierUniform));
            d.up_b.push_back(
                ps.create("seg.up" + std::to_string(l) + ".b", {w_next}, I::Zero));
            w = w_next;
        }
        d.head_w = ps.create("seg.head.w", {cfg.classes * img.patch.t, w, 1, 1, 1},
                             I::XavierUniform);
        d.head_b = ps.create("seg.head.b", {cfg.classes * img.patch.t}, I::Zero);
        return d;
    }

    // Which encoder layers feed the taps (evenly spaced, ending at the top).
    std::vector<std::size_t> tap_layers(std::size_t encoder_layers) const {
        std::vector<std::size_t> taps;
        for (std::size_t k = 1; k <= n_taps; ++k)
            taps.push_back(encoder_layers * k / n_taps - 1);
        return taps;
    }
};

namespace detail_model {
template <typename T>
Tensor<T> conv_block(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    Tensor<T> y = ops::conv3d(ops::pad_hw(x, 1), w, 1, 1, 1);
    const std::size_t F = y.dim(0), rest = y.size() / y.dim(0);
    Tensor<T> flat = ops::transpose(ops::reshape(y, {F, rest}));
    flat = ops::add_rows(flat, b);
    return ops::gelu(ops::reshape(ops::transpose(flat), y.shape()));
}

template <typename T>
Tensor<T> conv1x1(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    Tensor<T> y = ops::conv3d(x, w, 1, 1, 1);
    const std::size_t F = y.dim(0), rest = y.size() / y.dim(0);
    Tensor<T> flat = ops::transpose(ops::reshape(y, {F, rest}));
    flat = ops::add_rows(flat, b);
    return ops::reshape(ops::transpose(flat), y.shape());
}
}  // namespace detail_model

// Decodes one plane's token grid to class logits [classes x T_sel x H x W].
// encoder_taps: the per-layer full-token outputs (q must be 0); rows of this
// plane are selected via [row_begin, row_begin + gt*gy*gx).
template <typename T>
Tensor<T> seg_decode_plane(const SegDecoder<T>& dec, const std::vector<Tensor<T>>& layer_outputs,
                           std::size_t encoder_layers, const PatchGrid::PlaneGrid& pg,
                           std::size_t row_begin) {
    const std::size_t P = pg.count();
    std::vector<Tensor<T>> taps;
    for (std::size_t l : dec.tap_layers(encoder_layers)) {
        Tensor<T> rows = ops::gather_rows(layer_outputs.at(l), [&] {
            std::vector<std::size_t> idx(P);
            for (std::size_t i = 0; i < P; ++i) idx[i] = row_begin + i;
            return idx;
        }());
        // tokens are laid out (t, y, x) row-major: [P x dim] -> [dim x gt x gy x gx]
        taps.push_back(ops::reshape(ops::transpose(rows), {rows.dim(1), pg.gt, pg.gy, pg.gx}));
    }
    Tensor<T> x = taps.size() == 1 ? taps[0] : [&] {
        std::vector<Tensor<T>> mats;
        for (auto& t : taps) mats.push_back(ops::reshape(t, {t.dim(0), P}));
        return ops::reshape(ops::concat_rows(mats), {taps.size() * taps[0].dim(0), pg.gt, pg.gy,
                                                     pg.gx});
    }();
    x = detail_model::conv1x1(x, dec.fuse_w, dec.fuse_b);
    x = ops::gelu(x);
    for (std::size_t l = 0; l < dec.levels; ++l)
        x = detail_model::conv_block(ops::upsample2x_hw(x), dec.up_w[l], dec.up_b[l]);
    Tensor<T> logits = detail_model::conv1x1(x, dec.head_w, dec.head_b);
    // [classes*p_t x gt x H x W] -> [classes x gt*p_t x H x W]
    const std::size_t H = logits.dim(2), W = logits.dim(3);
    return ops::reshape(logits, {dec.cfg.classes, dec.patch_t * pg.gt, H, W});
}

// ---------------------------------------------------------------------------
// Tabular multi-head task decoder and per-disease classifiers
// ---------------------------------------------------------------------------
template <typename T>
struct TabularTaskDecoder {
    TaskDecoderConfig cfg;
    std::size_t n_pheno = 0, n_physio = 0, n_binary = 0, n_multi = 0;
    std::vector<std::size_t> multi_offsets, multi_cards;  // per categorical feature
    Tensor<T> t1_w, t1_b, t2_w, t2_b;
    Tensor<T> pheno_w, pheno_b, physio_w, physio_b, bin_w, bin_b, multi_w, multi_b;

    static TabularTaskDecoder create(const TaskDecoderConfig& cfg, std::size_t in_dim,
                                     const TabularSchema& schema, ParamStore<T>& ps) {
        using I = typename ParamStore<T>::Init;
        TabularTaskDecoder d;
        d.cfg = cfg;
        d.n_pheno = PhenotypeSet::target_names().size();
        d.n_physio = schema.physio_indices().size();
        d.n_binary = schema.count(FeatureKind::Binary);
        for (std::size_t f : schema.indices(FeatureKind::Categorical)) {
            d.multi_offsets.push_back(d.n_multi);
            d.multi_cards.push_back(schema.features[f].cardinality);
            d.n_multi += schema.features[f].cardinality;
        }
        const std::size_t w = cfg.trunk_width;
        d.t1_w = ps.create("tabdec.trunk1.w", {in_dim, w}, I::XavierUniform);
        d.t1_b = ps.create("tabdec.trunk1.b", {w}, I::Zero);
        d.t2_w = ps.create("tabdec.trunk2.w", {w, w}, I::XavierUniform);
        d.t2_b = ps.create("tabdec.trunk2.b", {w}, I::Zero);
        d.pheno_w = ps.create("tabdec.pheno.w", {w, d.n_pheno}, I::XavierUniform);
        d.pheno_b = ps.create("tabdec.pheno.b", {d.n_pheno}, I::Zero);
        d.physio_w = ps.create("tabdec.physio.w", {w, d.n_physio}, I::XavierUniform);
        d.physio_b = ps.create("tabdec.physio.b", {d.n_physio}, I::Zero);
        d.bin_w = ps.create("tabdec.binary.w", {w, d.n_binary}, I::XavierUniform);
        d.bin_b = ps.create("tabdec.binary.b", {d.n_binary}, I::Zero);
        d.multi_w = ps.create("tabdec.multi.w", {w, d.n_multi}, I::XavierUniform);
        d.multi_b = ps.create("tabdec.multi.b", {d.n_multi}, I::Zero);
        return d;
    }
};

template <typename T>
struct TabularDecodeOut {
    Tensor<T> pheno;          // [B x 17], standardized space
    Tensor<T> physio;         // [B x n_physio], standardized space
    Tensor<T> binary_logits;  // [B x n_binary]
    Tensor<T> multi_logits;   // [B x sum(cardinalities)]
};

// All four heads in one pass over pooled latents [B x dim].
template <typename T>
TabularDecodeOut<T> multihead_tabular_decode(const TabularTaskDecoder<T>& d,
                                             const Tensor<T>& pooled) {
    Tensor<T> h = ops::gelu(ops::add_rows(ops::matmul(pooled, d.t1_w), d.t1_b));
    h = ops::gelu(ops::add_rows(ops::matmul(h, d.t2_w), d.t2_b));
    TabularDecodeOut<T> out;
    out.pheno = ops::add_rows(ops::matmul(h, d.pheno_w), d.pheno_b);
    out.physio = ops::add_rows(ops::matmul(h, d.physio_w), d.physio_b);
    out.binary_logits = ops::add_rows(ops::matmul(h, d.bin_w), d.bin_b);
    out.multi_logits = ops::add_rows(ops::matmul(h, d.multi_w), d.multi_b);
    return out;
}

template <typename T>
struct DiseaseHeads {
    TaskDecoderConfig cfg;
    struct Head {
        Tensor<T> w1, b1, w2, b2;
    };
    std::vector<Head> heads;  // indexed by disease_index

    static DiseaseHeads create(const TaskDecoderConfig& cfg, std::size_t in_dim,
                               ParamStore<T>& ps) {
        using I = typename ParamStore<T>::Init;
        DiseaseHeads d;
        d.cfg = cfg;
        for (const auto& name : disease_names()) {
            Head h;
            h.w1 = ps.create("disease." + name + ".w1", {in_dim, cfg.trunk_width},
                             I::XavierUniform);
            h.b1 = ps.create("disease." + name + ".b1", {cfg.trunk_width}, I::Zero);
            h.w2 = ps.create("disease." + name + ".w2", {cfg.trunk_width, std::size_t{1}},
                             I::XavierUniform);
            h.b2 = ps.create("disease." + name + ".b2", {std::size_t{1}}, I::Zero);
            d.heads.push_back(h);
        }
        return d;
    }
};

// Single logit per subject for one disease; sigmoid is applied at metric
// time only.
template <typename T>
Tensor<T> disease_head(const DiseaseHeads<T>& d, const Tensor<T>& pooled,
                       std::size_t disease_idx) {
    if (disease_idx >= d.heads.size()) throw UsageError("disease head index out of range");
    const auto& h = d.heads[disease_idx];
    Tensor<T> hid = ops::gelu(ops::add_rows(ops::matmul(pooled, h.w1), h.b1));
    return ops::add_rows(ops::matmul(hid, h.w2), h.b2);
}

// ---------------------------------------------------------------------------
// The full bundle
// ---------------------------------------------------------------------------
template <typename T>
struct ModelBundle {
    ImageModelConfig img_cfg;
    TabularModelConfig tab_cfg;
    ProjectorConfig proj_cfg;
    SegDecoderConfig seg_cfg;
    TaskDecoderConfig task_cfg;

    ParamStore<T> params;
    ImageModel<T> image;
    TabularModel<T> tabular;
    Projector<T> proj_image, proj_tabular;
    SegDecoder<T> seg;
    TabularTaskDecoder<T> task_decoder;
    DiseaseHeads<T> diseases;

    static ModelBundle create(const ImageModelConfig& img, const TabularModelConfig& tab,
                              const ProjectorConfig& proj, const SegDecoderConfig& seg,
                              const TaskDecoderConfig& task, const TabularSchema& schema,
                              std::uint64_t seed) {
        ModelBundle b{img, tab, proj, seg, task, ParamStore<T>(seed), {}, {}, {}, {}, {}, {}, {}};
        b.image = ImageModel<T>::create(img, b.params);
        b.tabular = TabularModel<T>::create(tab, schema, b.params);
        b.proj_image = Projector<T>::create(b.params, "proj.image", img.dim, proj.out_dim);
        b.proj_tabular = Projector<T>::create(b.params, "proj.tabular", tab.dim, proj.out_dim);
        b.seg = SegDecoder<T>::create(seg, img, b.params);
        b.task_decoder = TabularTaskDecoder<T>::create(task, img.dim, schema, b.params);
        b.diseases = DiseaseHeads<T>::create(task, img.dim, b.params);
        return b;
    }

    // Parameter subsets per training stage.
    std::vector<Tensor<T>> stage1_params() const;
    std::vector<Tensor<T>> stage2_params() const;
};

template <typename T>
std::vector<Tensor<T>> ModelBundle<T>::stage1_params() const {
    std::vector<Tensor<T>> out;
    for (const auto& [name, t] : params.entries())
        if (name.rfind("image.", 0) == 0) out.push_back(t);
    return out;
}

template <typename T>
std::vector<Tensor<T>> ModelBundle<T>::stage2_params() const {
    std::vector<Tensor<T>> out;
    for (const auto& [name, t] : params.entries()) {
        const bool image_side = name.rfind("image.", 0) == 0 &&
                                name.rfind("image.dec", 0) != 0 &&
                                name.rfind("image.recon", 0) != 0 && name != "image.mask_token";
        const bool tabular_side = name.rfind("tabular.", 0) == 0;
        const bool projector = name.rfind("proj.", 0) == 0;
        if (image_side || tabular_side || projector) out.push_back(t);
    }
    return out;
}

}  // namespace cinetab
