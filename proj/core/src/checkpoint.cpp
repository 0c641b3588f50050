#include "hutk/checkpoint.hpp"

#include <map>
#include <sstream>

#include "hutk/io.hpp"

namespace hutk {

namespace {

constexpr uint32_t kVersion = 1;

std::string join_ints(const std::vector<int>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i > 0) {
            s += ',';
        }
        s += std::to_string(v[i]);
    }
    return s;
}

std::vector<int> split_ints(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        require(!item.empty(), ErrorCode::Malformed, "empty list entry in config block");
        out.push_back(std::stoi(item));
    }
    return out;
}

int to_int(const std::string& s) {
    try {
        size_t pos = 0;
        const int v = std::stoi(s, &pos);
        require(pos == s.size(), ErrorCode::Malformed, "trailing junk in config value: " + s);
        return v;
    } catch (const Error&) {
        throw;
    } catch (const std::exception&) {
        raise(ErrorCode::Malformed, "bad integer in config block: " + s);
    }
}

}  // namespace

std::string serialize_config(const ModelConfig& cfg) {
    std::string s;
    s += "preset=" + cfg.preset + "\n";
    s += "conv_channels=" + std::to_string(cfg.conv_channels) + "\n";
    s += "conv_kernels=" + join_ints(cfg.conv_kernels) + "\n";
    s += "conv_strides=" + join_ints(cfg.conv_strides) + "\n";
    s += "d_model=" + std::to_string(cfg.d_model) + "\n";
    s += "n_layers=" + std::to_string(cfg.n_layers) + "\n";
    s += "n_heads=" + std::to_string(cfg.n_heads) + "\n";
    s += "d_ffn=" + std::to_string(cfg.d_ffn) + "\n";
    s += "max_positions=" + std::to_string(cfg.max_positions) + "\n";
    s += "num_units=" + std::to_string(cfg.num_units) + "\n";
    s += "charset_size=" + std::to_string(cfg.charset_size) + "\n";
    return s;
}

ModelConfig parse_config_block(const std::string& text) {
    ModelConfig cfg;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        if (line.empty()) {
            continue;
        }
        const size_t eq = line.find('=');
        require(eq != std::string::npos, ErrorCode::Malformed, "bad config line: " + line);
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "preset") {
            cfg.preset = value;
        } else if (key == "conv_channels") {
            cfg.conv_channels = to_int(value);
        } else if (key == "conv_kernels") {
            cfg.conv_kernels = split_ints(value);
        } else if (key == "conv_strides") {
            cfg.conv_strides = split_ints(value);
        } else if (key == "d_model") {
            cfg.d_model = to_int(value);
        } else if (key == "n_layers") {
            cfg.n_layers = to_int(value);
        } else if (key == "n_heads") {
            cfg.n_heads = to_int(value);
        } else if (key == "d_ffn") {
            cfg.d_ffn = to_int(value);
        } else if (key == "max_positions") {
            cfg.max_positions = to_int(value);
        } else if (key == "num_units") {
            cfg.num_units = to_int(value);
        } else if (key == "charset_size") {
            cfg.charset_size = to_int(value);
        } else {
            raise(ErrorCode::Malformed, "unknown config key: " + key);
        }
    }
    cfg.validate();
    return cfg;
}

void write_checkpoint(const std::string& path, const ModelConfig& cfg,
                      const ModelState<float>& state) {
    for (const auto& t : state.tensors) {
        require(t.all_finite(), ErrorCode::NonFinite, "refusing to write non-finite checkpoint");
    }
    BinWriter out(path);
    out.magic("HUTK");
    out.u32(kVersion);
    const std::string cfg_block = serialize_config(cfg);
    out.u32(static_cast<uint32_t>(cfg_block.size()));
    out.str(cfg_block);
    out.u32(static_cast<uint32_t>(state.names.size()));
    for (size_t i = 0; i < state.names.size(); ++i) {
        const std::string& name = state.names[i];
        const Tensor<float>& t = state.tensors[i];
        out.u16(static_cast<uint16_t>(name.size()));
        out.str(name);
        out.u8(static_cast<uint8_t>(t.rank()));
        for (int64_t d : t.shape) {
            out.u32(static_cast<uint32_t>(d));
        }
        out.f32_array(t.data.data(), t.data.size());
    }
    out.close();
}

Checkpoint read_checkpoint(const std::string& path) {
    BinReader in(path, ErrorCode::Malformed);
    require(in.magic() == "HUTK", ErrorCode::VersionMismatch, "bad checkpoint magic: " + path);
    const uint32_t version = in.u32();
    require(version == kVersion, ErrorCode::VersionMismatch,
            "unsupported checkpoint version " + std::to_string(version) + ": " + path);
    const uint32_t cfg_len = in.u32();
    const ModelConfig cfg = parse_config_block(in.str(cfg_len));
    const uint32_t count = in.u32();
    require(count > 0, ErrorCode::Malformed, "checkpoint has no tensors: " + path);

    std::map<std::string, std::vector<int64_t>> expected;
    for (const auto& [name, shape] : parameter_table(cfg)) {
        expected.emplace(name, shape);
    }
    std::map<std::string, Tensor<float>> loaded;
    for (uint32_t i = 0; i < count; ++i) {
        const uint16_t name_len = in.u16();
        const std::string name = in.str(name_len);
        const auto it = expected.find(name);
        require(it != expected.end(), ErrorCode::Malformed,
                "unknown tensor in checkpoint: " + name);
        require(loaded.find(name) == loaded.end(), ErrorCode::Malformed,
                "duplicate tensor in checkpoint: " + name);
        const uint8_t rank = in.u8();
        std::vector<int64_t> shape(rank);
        for (uint8_t r = 0; r < rank; ++r) {
            shape[r] = in.u32();
        }
        require(shape == it->second, ErrorCode::ShapeMismatch,
                "tensor " + name + " has shape " + shape_str(shape) + ", config requires " +
                    shape_str(it->second));
        Tensor<float> t = Tensor<float>::zeros(shape);
        in.f32_array(t.data.data(), t.data.size());
        require(t.all_finite(), ErrorCode::NonFinite, "non-finite values in tensor " + name);
        loaded.emplace(name, std::move(t));
    }
    require(loaded.size() == expected.size(), ErrorCode::Malformed,
            "checkpoint is missing tensors: " + path);

    Checkpoint ck;
    ck.config = cfg;
    for (const auto& [name, shape] : parameter_table(cfg)) {
        ck.state.add(name, std::move(loaded.at(name)));
    }
    return ck;
}

}  // namespace hutk
