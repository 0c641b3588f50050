#pragma once

#include <string>

#include "hutk/model.hpp"

namespace hutk {

struct Checkpoint {
    ModelConfig config;
    ModelState<float> state;
};

// Binary model checkpoint: magic "HUTK", u32 version, length-prefixed
// key=value config block, then a tensor table keyed by parameter name.
void write_checkpoint(const std::string& path, const ModelConfig& cfg,
                      const ModelState<float>& state);

Checkpoint read_checkpoint(const std::string& path);

std::string serialize_config(const ModelConfig& cfg);
ModelConfig parse_config_block(const std::string& text);

}  // namespace hutk
