#include "hutk/model.hpp"

#include <algorithm>

namespace hutk {

void ModelConfig::validate() const {
    require(conv_kernels.size() == 7 && conv_strides.size() == 7, ErrorCode::BadConfig,
            "expected 7 convolutional blocks");
    require(stride_product() == 320, ErrorCode::BadConfig,
            "stride product must be 320 (20ms per frame at 16kHz)");
    require(d_model > 0 && n_layers > 0 && n_heads > 0 && d_ffn > 0, ErrorCode::BadConfig,
            "encoder dimensions must be positive");
    require(d_model % n_heads == 0, ErrorCode::BadConfig, "d_model must divide into heads");
    require(max_positions > 0, ErrorCode::BadConfig, "max_positions must be positive");
    require(num_units >= 1, ErrorCode::BadConfig, "need at least one unit class");
    require(charset_size >= 1, ErrorCode::BadConfig, "need a non-empty charset");
    for (size_t i = 0; i < conv_kernels.size(); ++i) {
        require(conv_kernels[i] >= 1 && conv_strides[i] >= 1, ErrorCode::BadConfig,
                "kernels and strides must be positive");
    }
}

int64_t ModelConfig::stride_product() const {
    int64_t p = 1;
    for (int s : conv_strides) {
        p *= s;
    }
    return p;
}

int64_t ModelConfig::receptive_field() const {
    // Receptive field of one output frame: fold sizes back through the blocks.
    int64_t r = 1;
    for (size_t i = conv_kernels.size(); i-- > 0;) {
        r = (r - 1) * conv_strides[i] + conv_kernels[i];
    }
    return r;
}

ModelConfig ModelConfig::preset_config(const std::string& name, int num_units, int charset_size) {
    ModelConfig cfg;
    cfg.preset = name;
    cfg.num_units = num_units;
    cfg.charset_size = charset_size;
    if (name == "TOY") {
        // Desk-scale preset: the conv front end is narrowed along with the
        // encoder so single-core training runs stay in the documented budgets.
        cfg.conv_channels = 64;
        cfg.d_model = 64;
        cfg.n_layers = 2;
        cfg.n_heads = 4;
        cfg.d_ffn = 128;
        cfg.max_positions = 512;
    } else if (name == "BASE") {
        cfg.d_model = 768;
        cfg.n_layers = 12;
        cfg.n_heads = 12;
        cfg.d_ffn = 3072;
        cfg.max_positions = 2048;
    } else if (name == "LARGE") {
        cfg.d_model = 1024;
        cfg.n_layers = 24;
        cfg.n_heads = 16;
        cfg.d_ffn = 4096;
        cfg.max_positions = 2048;
    } else if (name == "XLARGE") {
        cfg.d_model = 1280;
        cfg.n_layers = 48;
        cfg.n_heads = 16;
        cfg.d_ffn = 5120;
        cfg.max_positions = 2048;
    } else {
        raise(ErrorCode::BadConfig, "unknown preset: " + name);
    }
    cfg.validate();
    return cfg;
}

int64_t output_length(const ModelConfig& cfg, int64_t n_samples) {
    require(n_samples >= cfg.receptive_field(), ErrorCode::TooShort,
            "input of " + std::to_string(n_samples) + " samples is below one receptive field of " +
                std::to_string(cfg.receptive_field()));
    int64_t len = n_samples;
    for (size_t i = 0; i < cfg.conv_kernels.size(); ++i) {
        require(len >= cfg.conv_kernels[i], ErrorCode::TooShort,
                "intermediate length collapsed at block " + std::to_string(i));
        len = (len - cfg.conv_kernels[i]) / cfg.conv_strides[i] + 1;
    }
    return len;
}

int64_t min_input_for_frames(const ModelConfig& cfg, int64_t frames) {
    require(frames >= 1, ErrorCode::BadConfig, "frame count must be positive");
    auto frames_at = [&cfg](int64_t len) -> int64_t {
        if (len < cfg.receptive_field()) {
            return 0;
        }
        return output_length(cfg, len);
    };
    int64_t hi = cfg.receptive_field();
    while (frames_at(hi) < frames) {
        hi *= 2;
    }
    int64_t lo = cfg.receptive_field();
    // First length whose frame count reaches the target.
    while (lo < hi) {
        const int64_t mid = lo + (hi - lo) / 2;
        if (frames_at(mid) >= frames) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    require(frames_at(lo) == frames, ErrorCode::BadConfig,
            "no input length yields exactly " + std::to_string(frames) + " frames");
    return lo;
}

std::vector<std::pair<std::string, std::vector<int64_t>>> parameter_table(const ModelConfig& cfg) {
    std::vector<std::pair<std::string, std::vector<int64_t>>> table;
    const int64_t c = cfg.conv_channels;
    for (size_t i = 0; i < cfg.conv_kernels.size(); ++i) {
        const int64_t cin = i == 0 ? 1 : c;
        const std::string pfx = "conv" + std::to_string(i);
        table.emplace_back(pfx + ".w", std::vector<int64_t>{cfg.conv_kernels[i] * cin, c});
        table.emplace_back(pfx + ".b", std::vector<int64_t>{c});
        table.emplace_back(pfx + ".ln.g", std::vector<int64_t>{c});
        table.emplace_back(pfx + ".ln.b", std::vector<int64_t>{c});
    }
    const int64_t d = cfg.d_model;
    table.emplace_back("proj.w", std::vector<int64_t>{c, d});
    table.emplace_back("proj.b", std::vector<int64_t>{d});
    table.emplace_back("pos.embed", std::vector<int64_t>{cfg.max_positions, d});
    table.emplace_back("mask.embed", std::vector<int64_t>{d});
    for (int layer = 0; layer < cfg.n_layers; ++layer) {
        const std::string pfx = "enc" + std::to_string(layer);
        table.emplace_back(pfx + ".ln1.g", std::vector<int64_t>{d});
        table.emplace_back(pfx + ".ln1.b", std::vector<int64_t>{d});
        for (const char* nm : {"wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo"}) {
            const bool is_w = nm[0] == 'w';
            table.emplace_back(pfx + ".attn." + nm,
                               is_w ? std::vector<int64_t>{d, d} : std::vector<int64_t>{d});
        }
        table.emplace_back(pfx + ".ln2.g", std::vector<int64_t>{d});
        table.emplace_back(pfx + ".ln2.b", std::vector<int64_t>{d});
        table.emplace_back(pfx + ".ffn.w1", std::vector<int64_t>{d, cfg.d_ffn});
        table.emplace_back(pfx + ".ffn.b1", std::vector<int64_t>{cfg.d_ffn});
        table.emplace_back(pfx + ".ffn.w2", std::vector<int64_t>{cfg.d_ffn, d});
        table.emplace_back(pfx + ".ffn.b2", std::vector<int64_t>{d});
    }
    table.emplace_back("unit_head.w", std::vector<int64_t>{d, cfg.num_units});
    table.emplace_back("unit_head.b", std::vector<int64_t>{cfg.num_units});
    table.emplace_back("char_head.w", std::vector<int64_t>{d, cfg.charset_size + 1});
    table.emplace_back("char_head.b", std::vector<int64_t>{cfg.charset_size + 1});
    return table;
}

}  // namespace hutk
