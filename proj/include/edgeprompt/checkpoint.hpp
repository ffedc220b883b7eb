#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "edgeprompt/gnn.hpp"
#include "edgeprompt/graph.hpp"
#include "edgeprompt/prompt.hpp"

namespace edgeprompt {

inline constexpr std::string_view kCheckpointMagic{"EPCKPT1\0", 8};
inline constexpr std::string_view kPromptMagic{"EPPRMT1\0", 8};
inline constexpr int kContainerVersion = 1;

// Frozen backbone plus how it was produced.
struct Checkpoint {
    GnnModel model;
    std::string strategy = "none";
    std::uint64_t seed = 0;
    std::size_t epochs = 0;
    std::map<std::string, std::string> metadata;
};

// Encoding is canonical: equal checkpoints encode to equal bytes.
std::string encode_checkpoint(const Checkpoint& ckpt);
// Rejects bad magic, version, truncation, and tensors that do not match the
// declared model. With `expected_kind`, a different backbone kind is a
// Compatibility error.
Checkpoint decode_checkpoint(std::string_view bytes, std::optional<BackboneKind> expected_kind = {});

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path, std::optional<BackboneKind> expected_kind = {});

// SHA-256 of the encoded checkpoint.
std::string checkpoint_digest(const Checkpoint& ckpt);

// Learned prompts and head for one tuning run.
struct PromptArtifact {
    PromptSet prompts;
    LinearHead head;
    std::string backbone_digest;
    TaskKind task = TaskKind::Node;
    std::size_t num_classes = 0;
    std::size_t shots = 0;
    std::uint64_t split_seed = 0;
    std::uint64_t seed = 0;
    ReadoutKind readout = ReadoutKind::Sum;
};

std::string encode_prompt_artifact(const PromptArtifact& artifact);
// Shapes are checked against `backbone`; the digest is not (see
// require_matching_digest).
PromptArtifact decode_prompt_artifact(std::string_view bytes, const GnnModel& backbone);

void save_prompt_artifact(const PromptArtifact& artifact, const std::filesystem::path& path);
PromptArtifact load_prompt_artifact(const std::filesystem::path& path, const GnnModel& backbone);

// Compatibility error quoting both digests when they differ.
void require_matching_digest(const PromptArtifact& artifact, std::string_view checkpoint_digest);

}  // namespace edgeprompt
