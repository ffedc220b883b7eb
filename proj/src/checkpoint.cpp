#include "edgeprompt/checkpoint.hpp"

#include "container.hpp"
#include "edgeprompt/error.hpp"
#include "edgeprompt/io.hpp"

namespace edgeprompt {

using detail::require_field;
using detail::require_number;
using detail::require_string;
using detail::require_uint;

namespace {

void require_version(const nlohmann::json& header, const char* what) {
    const std::uint64_t version = require_uint(header, "version", what);
    if (version != kContainerVersion)
        throw Error(ErrorKind::Format, std::string(what) + " version " + std::to_string(version) +
                                           " is not supported (expected " + std::to_string(kContainerVersion) + ")");
}

template <typename Parse>
auto parse_field(Parse parse, const std::string& text, const char* field, const char* what) {
    try {
        return parse(text);
    } catch (const Error& e) {
        throw Error(ErrorKind::Format, std::string(what) + " field '" + field + "': " + e.what());
    }
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
    detail::Container c;
    c.header = {{"version", kContainerVersion},
                {"model",
                 {{"kind", to_string(ckpt.model.kind())},
                  {"dims", ckpt.model.dims()},
                  {"epsilon", ckpt.model.gin_epsilon()}}},
                {"strategy", ckpt.strategy},
                {"seed", ckpt.seed},
                {"epochs", ckpt.epochs},
                {"metadata", ckpt.metadata}};
    c.names = ckpt.model.parameter_names();
    c.tensors = ckpt.model.parameters();
    return detail::encode_container(kCheckpointMagic, c);
}

Checkpoint decode_checkpoint(std::string_view bytes, std::optional<BackboneKind> expected_kind) {
    constexpr const char* what = "checkpoint";
    detail::Container c = detail::decode_container(kCheckpointMagic, bytes, what);
    require_version(c.header, what);
    const nlohmann::json& model = require_field(c.header, "model", what);
    if (!model.is_object()) throw Error(ErrorKind::Format, "checkpoint field 'model' is not an object");
    const BackboneKind kind =
        parse_field(parse_backbone, require_string(model, "kind", "checkpoint model"), "model.kind", what);
    if (expected_kind && *expected_kind != kind)
        throw Error(ErrorKind::Compatibility, std::string("checkpoint holds a ") + to_string(kind) +
                                                  " backbone, expected " + to_string(*expected_kind));
    const nlohmann::json& dims_json = require_field(model, "dims", "checkpoint model");
    std::vector<std::size_t> dims;
    if (!dims_json.is_array()) throw Error(ErrorKind::Format, "checkpoint field 'model.dims' is not an array");
    for (const auto& d : dims_json) {
        if (!d.is_number_unsigned()) throw Error(ErrorKind::Format, "checkpoint field 'model.dims' has a bad entry");
        dims.push_back(d.get<std::size_t>());
    }
    const double epsilon = require_number(model, "epsilon", "checkpoint model");

    Checkpoint ckpt;
    try {
        ckpt.model = GnnModel::shaped(kind, dims, epsilon);
    } catch (const Error& e) {
        throw Error(ErrorKind::Format, std::string("checkpoint field 'model.dims': ") + e.what());
    }
    const auto& names = ckpt.model.parameter_names();
    if (c.names.size() != names.size())
        throw Error(ErrorKind::Format, "checkpoint has " + std::to_string(c.names.size()) + " tensors, a " +
                                           to_string(kind) + " with these dims needs " + std::to_string(names.size()));
    for (std::size_t i = 0; i < names.size(); ++i) {
        Tensor& slot = ckpt.model.parameters()[i];
        if (c.names[i] != names[i])
            throw Error(ErrorKind::Format, "checkpoint tensor " + std::to_string(i) + " is '" + c.names[i] +
                                               "', expected '" + names[i] + "'");
        if (!c.tensors[i].same_shape(slot))
            throw Error(ErrorKind::Format, "checkpoint tensor '" + names[i] + "' has shape " +
                                               c.tensors[i].shape_string() + ", expected " + slot.shape_string());
        slot = std::move(c.tensors[i]);
    }
    ckpt.strategy = require_string(c.header, "strategy", what);
    ckpt.seed = require_uint(c.header, "seed", what);
    ckpt.epochs = require_uint(c.header, "epochs", what);
    const nlohmann::json& meta = require_field(c.header, "metadata", what);
    if (!meta.is_object()) throw Error(ErrorKind::Format, "checkpoint field 'metadata' is not an object");
    for (auto it = meta.begin(); it != meta.end(); ++it) {
        if (!it->is_string()) throw Error(ErrorKind::Format, "checkpoint metadata '" + it.key() + "' is not a string");
        ckpt.metadata[it.key()] = it->get<std::string>();
    }
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path, std::optional<BackboneKind> expected_kind) {
    return decode_checkpoint(read_file(path), expected_kind);
}

std::string checkpoint_digest(const Checkpoint& ckpt) { return sha256_hex(encode_checkpoint(ckpt)); }

std::string encode_prompt_artifact(const PromptArtifact& a) {
    detail::Container c;
    c.header = {{"version", kContainerVersion},
                {"method", to_string(a.prompts.method())},
                {"anchors", a.prompts.anchors()},
                {"slope", a.prompts.leaky_slope()},
                {"backbone_digest", a.backbone_digest},
                {"task", to_string(a.task)},
                {"num_classes", a.num_classes},
                {"shots", a.shots},
                {"split_seed", a.split_seed},
                {"seed", a.seed},
                {"readout", to_string(a.readout)}};
    c.names = a.prompts.names();
    c.tensors = a.prompts.tensors();
    c.names.push_back("head.weight");
    c.tensors.push_back(a.head.weight);
    c.names.push_back("head.bias");
    c.tensors.push_back(a.head.bias);
    return detail::encode_container(kPromptMagic, c);
}

PromptArtifact decode_prompt_artifact(std::string_view bytes, const GnnModel& backbone) {
    constexpr const char* what = "prompt file";
    detail::Container c = detail::decode_container(kPromptMagic, bytes, what);
    require_version(c.header, what);
    PromptArtifact a;
    const PromptMethod method = parse_field(parse_method, require_string(c.header, "method", what), "method", what);
    a.backbone_digest = require_string(c.header, "backbone_digest", what);
    a.task = parse_field(parse_task, require_string(c.header, "task", what), "task", what);
    a.readout = parse_field(parse_readout, require_string(c.header, "readout", what), "readout", what);
    a.num_classes = require_uint(c.header, "num_classes", what);
    a.shots = require_uint(c.header, "shots", what);
    a.split_seed = require_uint(c.header, "split_seed", what);
    a.seed = require_uint(c.header, "seed", what);
    const std::size_t anchors = require_uint(c.header, "anchors", what);
    const double slope = require_number(c.header, "slope", what);

    if (c.names.size() < 2 || c.names[c.names.size() - 2] != "head.weight" || c.names.back() != "head.bias")
        throw Error(ErrorKind::Format, "prompt file does not end with head.weight and head.bias");
    a.head.bias = std::move(c.tensors.back());
    a.head.weight = std::move(c.tensors[c.tensors.size() - 2]);
    c.names.resize(c.names.size() - 2);
    c.tensors.resize(c.tensors.size() - 2);
    if (a.head.weight.rows() != backbone.output_dim() || a.head.weight.cols() != a.num_classes ||
        a.head.bias.rows() != 1 || a.head.bias.cols() != a.num_classes)
        throw Error(ErrorKind::Format, "prompt file head " + a.head.weight.shape_string() + " / " +
                                           a.head.bias.shape_string() + " does not fit backbone output " +
                                           std::to_string(backbone.output_dim()) + " and " +
                                           std::to_string(a.num_classes) + " classes");
    try {
        a.prompts = PromptSet::from_tensors(method, backbone, anchors, slope, std::move(c.names), std::move(c.tensors));
    } catch (const Error& e) {
        throw Error(ErrorKind::Format, std::string("prompt file: ") + e.what());
    }
    return a;
}

void save_prompt_artifact(const PromptArtifact& artifact, const std::filesystem::path& path) {
    write_file_atomic(path, encode_prompt_artifact(artifact));
}

PromptArtifact load_prompt_artifact(const std::filesystem::path& path, const GnnModel& backbone) {
    return decode_prompt_artifact(read_file(path), backbone);
}

void require_matching_digest(const PromptArtifact& artifact, std::string_view checkpoint_digest) {
    if (artifact.backbone_digest != checkpoint_digest)
        throw Error(ErrorKind::Compatibility, "prompt file was tuned on backbone " + artifact.backbone_digest +
                                                  ", checkpoint digest is " + std::string(checkpoint_digest));
}

}  // namespace edgeprompt
