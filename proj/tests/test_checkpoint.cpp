#include <doctest.h>

#include <cstring>
#include <filesystem>

#include "edgeprompt/checkpoint.hpp"
#include "edgeprompt/io.hpp"
#include "helpers.hpp"

using namespace edgeprompt;
using testing::kind_of;

namespace {

Checkpoint sample_checkpoint(BackboneKind kind) {
    Checkpoint c;
    c.model = GnnModel::create(kind, {3, 6, 4}, 11, kind == BackboneKind::Gin ? 0.25 : 0.0);
    c.strategy = "graphcl";
    c.seed = 42;
    c.epochs = 7;
    c.metadata = {{"dataset", "toy.json"}, {"note", "unicode \xc3\xa9"}};
    return c;
}

PromptArtifact sample_artifact(const GnnModel& backbone, PromptMethod method) {
    Rng rng(3);
    PromptArtifact a;
    a.prompts = PromptSet::init(method, backbone, 4, 9);
    a.head = LinearHead::create(backbone.output_dim(), 3, 5);
    for (Tensor& t : a.prompts.tensors())
        for (double& v : t.values()) v = rng.normal();
    Checkpoint c;
    c.model = backbone;
    a.backbone_digest = checkpoint_digest(c);
    a.num_classes = 3;
    a.shots = 5;
    a.split_seed = 8;
    a.seed = 2;
    return a;
}

std::filesystem::path scratch(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "edgeprompt_test_checkpoint";
    std::filesystem::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST_CASE("checkpoint round trip is bit-exact in memory and on disk") {
    for (BackboneKind kind : {BackboneKind::Gcn, BackboneKind::Gin}) {
        const Checkpoint c = sample_checkpoint(kind);
        const std::string bytes = encode_checkpoint(c);
        CHECK(bytes.compare(0, 8, kCheckpointMagic) == 0);
        const Checkpoint back = decode_checkpoint(bytes);
        CHECK(encode_checkpoint(back) == bytes);
        CHECK(back.model.kind() == kind);
        CHECK(back.model.dims() == c.model.dims());
        CHECK(back.model.gin_epsilon() == c.model.gin_epsilon());
        CHECK(back.strategy == "graphcl");
        CHECK(back.seed == 42);
        CHECK(back.epochs == 7);
        CHECK(back.metadata == c.metadata);
        for (std::size_t k = 0; k < c.model.parameters().size(); ++k)
            CHECK(bitwise_equal(back.model.parameters()[k], c.model.parameters()[k]));

        const auto path = scratch(std::string("ck_") + to_string(kind) + ".bin");
        save_checkpoint(c, path);
        CHECK(read_file(path) == bytes);
        const Checkpoint loaded = load_checkpoint(path);
        save_checkpoint(loaded, path);
        CHECK(read_file(path) == bytes);
        CHECK(checkpoint_digest(loaded) == checkpoint_digest(c));
        CHECK(checkpoint_digest(c).size() == 64);
    }
}

TEST_CASE("checkpoint digest changes with any tensor bit") {
    Checkpoint c = sample_checkpoint(BackboneKind::Gcn);
    const std::string before = checkpoint_digest(c);
    double& v = c.model.parameters()[0].values()[0];
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    bits ^= 1;
    std::memcpy(&v, &bits, sizeof bits);
    CHECK(checkpoint_digest(c) != before);
}

TEST_CASE("truncated and corrupted checkpoints raise format errors") {
    const std::string bytes = encode_checkpoint(sample_checkpoint(BackboneKind::Gin));
    for (std::size_t len : {std::size_t{0}, std::size_t{5}, std::size_t{12}, std::size_t{40}, bytes.size() / 2,
                            bytes.size() - 1})
        CHECK(kind_of([&] { decode_checkpoint(std::string_view(bytes).substr(0, len)); }) == ErrorKind::Format);
    std::string bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK(kind_of([&] { decode_checkpoint(bad_magic); }) == ErrorKind::Format);
    std::string extra = bytes + "junkjunk";
    CHECK(kind_of([&] { decode_checkpoint(extra); }) == ErrorKind::Format);

    std::string bad_version = bytes;
    const auto at = bad_version.find("\"version\":1");
    REQUIRE(at != std::string::npos);
    bad_version[at + 10] = '7';
    try {
        decode_checkpoint(bad_version);
        FAIL("expected a format error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Format);
        CHECK(std::string(e.what()).find("version") != std::string::npos);
    }
}

TEST_CASE("checkpoint kind guard") {
    const std::string bytes = encode_checkpoint(sample_checkpoint(BackboneKind::Gcn));
    CHECK(kind_of([&] { decode_checkpoint(bytes, BackboneKind::Gin); }) == ErrorKind::Compatibility);
    CHECK(decode_checkpoint(bytes, BackboneKind::Gcn).model.kind() == BackboneKind::Gcn);
}

TEST_CASE("prompt artifacts round-trip for every method") {
    const GnnModel backbone = GnnModel::create(BackboneKind::Gcn, {3, 6, 4}, 1);
    for (PromptMethod m : {PromptMethod::ClassifierOnly, PromptMethod::EdgePrompt, PromptMethod::EdgePromptPlus,
                           PromptMethod::Gpf, PromptMethod::GpfPlus}) {
        const PromptArtifact a = sample_artifact(backbone, m);
        const std::string bytes = encode_prompt_artifact(a);
        CHECK(bytes.compare(0, 8, kPromptMagic) == 0);
        const PromptArtifact back = decode_prompt_artifact(bytes, backbone);
        CHECK(encode_prompt_artifact(back) == bytes);
        CHECK(back.prompts.method() == m);
        CHECK(back.prompts.names() == a.prompts.names());
        for (std::size_t k = 0; k < a.prompts.tensors().size(); ++k)
            CHECK(bitwise_equal(back.prompts.tensors()[k], a.prompts.tensors()[k]));
        CHECK(bitwise_equal(back.head.weight, a.head.weight));
        CHECK(bitwise_equal(back.head.bias, a.head.bias));
        CHECK(back.backbone_digest == a.backbone_digest);
        CHECK(back.split_seed == 8);

        const auto path = scratch("prompt.bin");
        save_prompt_artifact(a, path);
        CHECK(read_file(path) == bytes);
    }
}

TEST_CASE("prompt artifacts are checked against their backbone") {
    const GnnModel backbone = GnnModel::create(BackboneKind::Gcn, {3, 6, 4}, 1);
    const PromptArtifact a = sample_artifact(backbone, PromptMethod::EdgePromptPlus);
    const std::string bytes = encode_prompt_artifact(a);
    const GnnModel other_shape = GnnModel::create(BackboneKind::Gcn, {3, 5, 4}, 1);
    CHECK(kind_of([&] { decode_prompt_artifact(bytes, other_shape); }) == ErrorKind::Format);
    CHECK(kind_of([&] { decode_prompt_artifact(bytes.substr(0, bytes.size() - 3), backbone); }) == ErrorKind::Format);

    require_matching_digest(a, a.backbone_digest);
    const GnnModel retrained = GnnModel::create(BackboneKind::Gcn, {3, 6, 4}, 2);
    Checkpoint c;
    c.model = retrained;
    try {
        require_matching_digest(a, checkpoint_digest(c));
        FAIL("expected a compatibility error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Compatibility);
        CHECK(std::string(e.what()).find(a.backbone_digest) != std::string::npos);
        CHECK(std::string(e.what()).find(checkpoint_digest(c)) != std::string::npos);
    }
}
