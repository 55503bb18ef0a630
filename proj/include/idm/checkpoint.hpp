#pragma once

#include <string>
#include <string_view>

#include "idm/models.hpp"
#include "json.hpp"

namespace idm {

// On disk: "IDMCKPT1", u64 little-endian header length, JSON header, then a
// little-endian float32 blob of every tensor in header-declared order.
struct CheckpointHeader {
    EncoderConfig encoder;
    ModelConfig model;
    std::size_t step = 0;
    double val_rmse = 0.0;
    nlohmann::ordered_json extra = nlohmann::ordered_json::object();
};

std::string serialize_checkpoint(const ModelParams<float>& params, const CheckpointHeader& header);
ModelParams<float> deserialize_checkpoint(std::string_view bytes, CheckpointHeader* header = nullptr);

void save_checkpoint(const std::string& path, const ModelParams<float>& params, const CheckpointHeader& header);
ModelParams<float> load_checkpoint(const std::string& path, CheckpointHeader* header = nullptr);

}  // namespace idm
