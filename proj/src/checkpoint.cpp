#include "idm/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "idm/util.hpp"

namespace idm {

namespace {

constexpr std::string_view kMagic = "IDMCKPT1";

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(std::string_view in) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[i])) << (8 * i);
    return v;
}

void put_f32(std::string& out, float x) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(x);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

float get_f32(const char* p) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return std::bit_cast<float>(bits);
}

}  // namespace

std::string serialize_checkpoint(const ModelParams<float>& params, const CheckpointHeader& header) {
    nlohmann::ordered_json j;
    j["format"] = "idm-checkpoint";
    j["version"] = 1;
    j["encoder"] = header.encoder.to_json();
    j["model"] = {{"method", to_string(header.model.method)},
                  {"pooling", to_string(header.model.pooling)},
                  {"aggregation", to_string(header.model.aggregation)}};
    j["step"] = header.step;
    j["val_rmse"] = header.val_rmse;
    j["extra"] = header.extra;
    nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
    params.for_each([&](const Tensor<float>& t) { tensors.push_back({{"name", t.name}, {"shape", t.shape}}); });
    j["tensors"] = tensors;
    const std::string head = j.dump();

    std::string out(kMagic);
    put_u64(out, head.size());
    out += head;
    out.reserve(out.size() + 4 * params.parameter_count());
    params.for_each([&](const Tensor<float>& t) {
        for (float x : t.data) put_f32(out, x);
    });
    return out;
}

ModelParams<float> deserialize_checkpoint(std::string_view bytes, CheckpointHeader* header) {
    if (bytes.size() < 16 || bytes.substr(0, 8) != kMagic) {
        throw ValidationError("not a checkpoint file");
    }
    const auto head_len = get_u64(bytes.substr(8));
    if (16 + head_len > bytes.size()) {
        throw ValidationError("truncated checkpoint header");
    }
    const auto j = nlohmann::json::parse(bytes.substr(16, head_len));
    CheckpointHeader h;
    h.encoder = EncoderConfig::from_json(j.at("encoder"));
    h.model.method = parse_method(j.at("model").at("method").get<std::string>());
    h.model.pooling = parse_pooling(j.at("model").at("pooling").get<std::string>());
    h.model.aggregation = parse_aggregation(j.at("model").at("aggregation").get<std::string>());
    h.step = j.at("step").get<std::size_t>();
    h.val_rmse = j.at("val_rmse").get<double>();
    h.extra = nlohmann::ordered_json::parse(j.at("extra").dump());

    auto params = make_model_params<float>(h.encoder, regression_width(h.model, h.encoder.hidden));
    const auto& declared = j.at("tensors");
    std::size_t index = 0;
    const char* cursor = bytes.data() + 16 + head_len;
    const char* end = bytes.data() + bytes.size();
    params.for_each([&](Tensor<float>& t) {
        if (index >= declared.size() || declared[index].at("name").get<std::string>() != t.name ||
            declared[index].at("shape").get<std::vector<std::size_t>>() != t.shape) {
            throw ValidationError("checkpoint tensor layout does not match its configuration at " + t.name);
        }
        ++index;
        if (end - cursor < static_cast<std::ptrdiff_t>(4 * t.size())) {
            throw ValidationError("truncated checkpoint blob at " + t.name);
        }
        for (auto& x : t.data) {
            x = get_f32(cursor);
            cursor += 4;
        }
    });
    if (index != declared.size() || cursor != end) {
        throw ValidationError("checkpoint has trailing tensors or bytes");
    }
    if (header) {
        *header = std::move(h);
    }
    return params;
}

void save_checkpoint(const std::string& path, const ModelParams<float>& params, const CheckpointHeader& header) {
    write_file(path, serialize_checkpoint(params, header));
}

ModelParams<float> load_checkpoint(const std::string& path, CheckpointHeader* header) {
    return deserialize_checkpoint(read_file(path), header);
}

}  // namespace idm
