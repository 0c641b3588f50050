#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "hutk/autodiff.hpp"
#include "hutk/rng.hpp"
#include "hutk/tensor.hpp"

namespace hutk {

struct ModelConfig {
    int conv_channels = 512;
    std::vector<int> conv_kernels = {10, 3, 3, 3, 3, 2, 2};
    std::vector<int> conv_strides = {5, 2, 2, 2, 2, 2, 2};
    int d_model = 64;
    int n_layers = 2;
    int n_heads = 4;
    int d_ffn = 128;
    int max_positions = 512;
    int num_units = 16;
    int charset_size = 30;  // letters + space; blank is an extra logit
    std::string preset = "TOY";

    void validate() const;
    int64_t stride_product() const;
    int64_t receptive_field() const;
    int head_dim() const { return d_model / n_heads; }

    // TOY, BASE, LARGE, XLARGE. Encoder depth/width per preset; unit and
    // charset head sizes are supplied by the caller.
    static ModelConfig preset_config(const std::string& name, int num_units, int charset_size);
};

// Encoder frame count for a raw sample count: the conv length formula folded
// over all blocks. Inputs below one receptive field raise TooShort.
int64_t output_length(const ModelConfig& cfg, int64_t n_samples);

// Smallest sample count whose output_length equals frames.
int64_t min_input_for_frames(const ModelConfig& cfg, int64_t frames);

template <typename T>
struct ModelState {
    std::vector<std::string> names;
    std::vector<Tensor<T>> tensors;
    std::map<std::string, size_t> index;

    void add(const std::string& name, Tensor<T> t) {
        require(index.find(name) == index.end(), ErrorCode::DuplicateId,
                "duplicate parameter: " + name);
        index.emplace(name, names.size());
        names.push_back(name);
        tensors.push_back(std::move(t));
    }

    Tensor<T>& param(const std::string& name) {
        auto it = index.find(name);
        require(it != index.end(), ErrorCode::NotFound, "no parameter named " + name);
        return tensors[it->second];
    }

    const Tensor<T>& param(const std::string& name) const {
        auto it = index.find(name);
        require(it != index.end(), ErrorCode::NotFound, "no parameter named " + name);
        return tensors[it->second];
    }

    bool has(const std::string& name) const { return index.find(name) != index.end(); }

    int64_t total_params() const {
        int64_t n = 0;
        for (const auto& t : tensors) {
            n += t.numel();
        }
        return n;
    }
};

// Parameter names and shapes in serialization order. Weight layouts:
// conv{i}.w is (kernel*C_in) x C_out, linear weights are in_dim x out_dim.
std::vector<std::pair<std::string, std::vector<int64_t>>> parameter_table(const ModelConfig& cfg);

template <typename T>
ModelState<T> init_model_state(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    ModelState<T> st;
    for (const auto& [name, shape] : parameter_table(cfg)) {
        if (name.ends_with("ln.g") || name.ends_with("ln1.g") || name.ends_with("ln2.g")) {
            st.add(name, Tensor<T>::full(shape, T(1)));
        } else if (name == "pos.embed") {
            st.add(name, Tensor<T>::gaussian(shape, rng, 0.02));
        } else if (name == "mask.embed") {
            st.add(name, Tensor<T>::gaussian(shape, rng, 0.1));
        } else if (name == "unit_head.w" || name == "char_head.w") {
            st.add(name, Tensor<T>::gaussian(shape, rng, 0.01));
        } else if (shape.size() == 1) {
            // All biases and layer-norm shifts start at zero.
            st.add(name, Tensor<T>::zeros(shape));
        } else {
            require(shape.size() == 2, ErrorCode::BadConfig, "unexpected parameter shape: " + name);
            st.add(name,
                   Tensor<T>::gaussian(shape, rng, std::sqrt(1.0 / static_cast<double>(shape[0]))));
        }
    }
    return st;
}

// A model whose parameters are bound to tape leaves for one forward pass.
template <typename T>
struct BoundModel {
    const ModelConfig* cfg = nullptr;
    Tape<T>* tape = nullptr;
    std::map<std::string, typename Tape<T>::Id> ids;

    typename Tape<T>::Id p(const std::string& name) const {
        auto it = ids.find(name);
        require(it != ids.end(), ErrorCode::NotFound, "no bound parameter " + name);
        return it->second;
    }
};

template <typename T>
BoundModel<T> bind_model(Tape<T>& tape, const ModelState<T>& st, const ModelConfig& cfg,
                         const std::function<bool(const std::string&)>& trainable = nullptr) {
    BoundModel<T> bm;
    bm.cfg = &cfg;
    bm.tape = &tape;
    for (size_t i = 0; i < st.names.size(); ++i) {
        const bool rg = trainable ? trainable(st.names[i]) : true;
        bm.ids.emplace(st.names[i],
                       tape.leaf_ref(st.tensors[i].data.data(), st.tensors[i].shape, rg));
    }
    return bm;
}

template <typename T>
Tensor<T> waveform_tensor(const std::vector<float>& samples) {
    Tensor<T> t = Tensor<T>::zeros({static_cast<int64_t>(samples.size()), 1});
    for (size_t i = 0; i < samples.size(); ++i) {
        t.data[i] = static_cast<T>(samples[i]);
    }
    return t;
}

// Conv front end: 7 x (conv1d -> layer_norm over channels -> gelu), then a
// linear projection to d_model. Returns a T x d_model node.
template <typename T>
typename Tape<T>::Id extract_features(const BoundModel<T>& bm, typename Tape<T>::Id samples) {
    Tape<T>& tape = *bm.tape;
    const ModelConfig& cfg = *bm.cfg;
    typename Tape<T>::Id x = samples;
    const int64_t len = tape.shape(samples)[0];
    require(len >= cfg.receptive_field(), ErrorCode::TooShort,
            "input of " + std::to_string(len) + " samples is below one receptive field of " +
                std::to_string(cfg.receptive_field()));
    for (size_t i = 0; i < cfg.conv_kernels.size(); ++i) {
        const std::string pfx = "conv" + std::to_string(i);
        x = tape.conv1d(x, bm.p(pfx + ".w"), bm.p(pfx + ".b"), cfg.conv_kernels[i],
                        cfg.conv_strides[i]);
        x = tape.layer_norm(x, bm.p(pfx + ".ln.g"), bm.p(pfx + ".ln.b"), T(1e-5));
        x = tape.gelu(x);
    }
    x = tape.add_row(tape.matmul(x, bm.p("proj.w")), bm.p("proj.b"));
    return x;
}

template <typename T>
struct EncodeResult {
    // layer_outputs[0] is the embedded block input (after masking and
    // positional embeddings); layer_outputs[i] is the output of block i.
    std::vector<typename Tape<T>::Id> layer_outputs;
    // One {n_heads, T, T} tensor per layer when capture_attention is set.
    std::vector<Tensor<T>> attentions;
};

template <typename T>
EncodeResult<T> encode(const BoundModel<T>& bm, typename Tape<T>::Id hidden,
                       const std::vector<int64_t>& mask_rows = {},
                       bool capture_attention = false) {
    Tape<T>& tape = *bm.tape;
    const ModelConfig& cfg = *bm.cfg;
    const int64_t t = tape.shape(hidden)[0];
    require(tape.shape(hidden)[1] == cfg.d_model, ErrorCode::DimensionMismatch,
            "encode: hidden width mismatch");
    require(t <= cfg.max_positions, ErrorCode::SequenceTooLong,
            "sequence of " + std::to_string(t) + " frames exceeds max_positions " +
                std::to_string(cfg.max_positions));

    typename Tape<T>::Id h = hidden;
    if (!mask_rows.empty()) {
        h = tape.replace_rows(h, bm.p("mask.embed"), mask_rows);
    }
    h = tape.add(h, tape.slice_rows(bm.p("pos.embed"), 0, t));

    EncodeResult<T> res;
    res.layer_outputs.push_back(h);
    const int dh = cfg.head_dim();
    const T scale = T(1) / static_cast<T>(std::sqrt(static_cast<double>(dh)));
    for (int layer = 0; layer < cfg.n_layers; ++layer) {
        const std::string pfx = "enc" + std::to_string(layer);
        // Self-attention sublayer, pre-norm.
        typename Tape<T>::Id a_in =
            tape.layer_norm(h, bm.p(pfx + ".ln1.g"), bm.p(pfx + ".ln1.b"), T(1e-5));
        typename Tape<T>::Id q =
            tape.add_row(tape.matmul(a_in, bm.p(pfx + ".attn.wq")), bm.p(pfx + ".attn.bq"));
        typename Tape<T>::Id k =
            tape.add_row(tape.matmul(a_in, bm.p(pfx + ".attn.wk")), bm.p(pfx + ".attn.bk"));
        typename Tape<T>::Id v =
            tape.add_row(tape.matmul(a_in, bm.p(pfx + ".attn.wv")), bm.p(pfx + ".attn.bv"));
        std::vector<typename Tape<T>::Id> head_outs;
        Tensor<T> attn_cap;
        if (capture_attention) {
            attn_cap = Tensor<T>::zeros({cfg.n_heads, t, t});
        }
        for (int head = 0; head < cfg.n_heads; ++head) {
            const int64_t c0 = static_cast<int64_t>(head) * dh;
            const int64_t c1 = c0 + dh;
            typename Tape<T>::Id qh = tape.slice_cols(q, c0, c1);
            typename Tape<T>::Id kh = tape.slice_cols(k, c0, c1);
            typename Tape<T>::Id vh = tape.slice_cols(v, c0, c1);
            typename Tape<T>::Id scores =
                tape.scale(tape.matmul(qh, tape.transpose(kh)), scale);
            typename Tape<T>::Id attn = tape.softmax_rows(scores);
            if (capture_attention) {
                const Tensor<T> a = tape.value_tensor(attn);
                std::copy(a.data.begin(), a.data.end(),
                          attn_cap.data.begin() + static_cast<int64_t>(head) * t * t);
            }
            head_outs.push_back(tape.matmul(attn, vh));
        }
        if (capture_attention) {
            res.attentions.push_back(std::move(attn_cap));
        }
        typename Tape<T>::Id merged = cfg.n_heads == 1 ? head_outs[0] : tape.concat_cols(head_outs);
        typename Tape<T>::Id attn_out =
            tape.add_row(tape.matmul(merged, bm.p(pfx + ".attn.wo")), bm.p(pfx + ".attn.bo"));
        h = tape.add(h, attn_out);

        // Feed-forward sublayer, pre-norm.
        typename Tape<T>::Id f_in =
            tape.layer_norm(h, bm.p(pfx + ".ln2.g"), bm.p(pfx + ".ln2.b"), T(1e-5));
        typename Tape<T>::Id f1 =
            tape.gelu(tape.add_row(tape.matmul(f_in, bm.p(pfx + ".ffn.w1")), bm.p(pfx + ".ffn.b1")));
        typename Tape<T>::Id f2 =
            tape.add_row(tape.matmul(f1, bm.p(pfx + ".ffn.w2")), bm.p(pfx + ".ffn.b2"));
        h = tape.add(h, f2);
        res.layer_outputs.push_back(h);
    }
    return res;
}

template <typename T>
typename Tape<T>::Id unit_logits(const BoundModel<T>& bm, typename Tape<T>::Id top_hidden) {
    return bm.tape->add_row(bm.tape->matmul(top_hidden, bm.p("unit_head.w")),
                            bm.p("unit_head.b"));
}

// Character logits, one column per charset symbol plus the blank at index 0.
template <typename T>
typename Tape<T>::Id char_logits(const BoundModel<T>& bm, typename Tape<T>::Id top_hidden) {
    return bm.tape->add_row(bm.tape->matmul(top_hidden, bm.p("char_head.w")),
                            bm.p("char_head.b"));
}

}  // namespace hutk
