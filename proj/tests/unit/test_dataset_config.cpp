#include <fstream>
#include <iterator>

#include <gtest/gtest.h>

#include "sra/archive.hpp"
#include "sra/config.hpp"
#include "sra/dataset.hpp"
#include "sra/diagnostics.hpp"
#include "test_util.hpp"

namespace sra {
namespace {

TEST(Shapes, DeterministicForFixedSeed) {
    const auto a = generate_shapes(40, 4, 7);
    const auto b = generate_shapes(40, 4, 7);
    EXPECT_TRUE(a.images.bit_equal(b.images));
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_FALSE(a.images.bit_equal(generate_shapes(40, 4, 8).images));
    EXPECT_EQ(a.images.shape(), (Shape{40, 1, 16, 16}));
}

TEST(Shapes, BalancedClassesAndRange) {
    const auto d = generate_shapes(400, 4, 1);
    std::vector<int> counts(4, 0);
    for (int l : d.labels) ++counts[static_cast<std::size_t>(l)];
    for (int c : counts) EXPECT_EQ(c, 100);
    for (double v : d.images.values()) {
        EXPECT_GE(v, -1.0);
        EXPECT_LE(v, 1.0);
    }
    const auto odd = generate_shapes(403, 8, 1);
    std::vector<int> oc(8, 0);
    for (int l : odd.labels) ++oc[static_cast<std::size_t>(l)];
    const auto [lo, hi] = std::minmax_element(oc.begin(), oc.end());
    EXPECT_LE(*hi - *lo, 1);
}

TEST(Shapes, Errors) {
    EXPECT_THROW(generate_shapes(10, 1, 0), std::invalid_argument);
    EXPECT_THROW(generate_shapes(10, 9, 0), std::invalid_argument);
    EXPECT_THROW(generate_shapes(3, 4, 0), std::invalid_argument);
}

TEST(Shapes, RawPixelProbeSeparatesClasses) {
    for (int classes : {4, 8}) {
        const auto d = generate_shapes(1200, classes, 3);
        ProbeConfig pc;
        EXPECT_GT(linear_probe(flatten_images(d.images), d.labels, pc), 0.9) << classes;
    }
}

TEST(Shapes, GatherAndSlice) {
    const auto d = generate_shapes(12, 3, 2, 8);
    const std::vector<std::int64_t> idx{5, 0};
    const Tensor g = d.gather(idx);
    EXPECT_EQ(g.shape(), (Shape{2, 1, 8, 8}));
    for (int j = 0; j < 64; ++j) EXPECT_EQ(g[j], d.images[5 * 64 + j]);
    EXPECT_EQ(d.gather_labels(idx), (std::vector<int>{2, 0}));
    const auto s = d.slice(3, 7);
    EXPECT_EQ(s.size(), 4);
    EXPECT_EQ(s.labels.front(), 0);
    EXPECT_THROW(d.slice(5, 13), std::out_of_range);
}

TEST(DatasetIo, RoundTrip) {
    test::TempDir dir;
    const auto d = generate_shapes(20, 4, 5);
    save_dataset(d, dir / "d.sra");
    const auto back = load_dataset(dir / "d.sra");
    EXPECT_TRUE(back.images.bit_equal(d.images));
    EXPECT_EQ(back.labels, d.labels);
    EXPECT_EQ(back.num_classes, 4);
    EXPECT_EQ(back.seed, 5u);
}

TEST(DatasetIo, TruncatedFileNamesPayload) {
    test::TempDir dir;
    save_dataset(generate_shapes(20, 4, 5), dir / "d.sra");
    std::ifstream in(dir / "d.sra", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    bytes.resize(bytes.size() - 10);
    std::ofstream(dir / "t.sra", std::ios::binary) << bytes;
    try {
        load_dataset(dir / "t.sra");
        FAIL() << "expected ArchiveError";
    } catch (const ArchiveError& e) {
        EXPECT_EQ(e.tensor_name(), "labels");
    }
}

TEST(DatasetIo, EmptyDatasetIsValid) {
    test::TempDir dir;
    ShapesDataset empty;
    empty.images = Tensor({0, 1, 16, 16});
    empty.num_classes = 4;
    save_dataset(empty, dir / "e.sra");
    const auto back = load_dataset(dir / "e.sra");
    EXPECT_EQ(back.size(), 0);
    EXPECT_EQ(back.images.shape(), (Shape{0, 1, 16, 16}));
}

TEST(DatasetIo, WrongKindRejected) {
    test::TempDir dir;
    TensorArchive ar;
    ar.put("images", Tensor({1, 1, 8, 8}));
    ar.save(dir / "x.sra");
    EXPECT_THROW(load_dataset(dir / "x.sra"), ArchiveError);
}

TEST(RunConfig, EmptyJsonResolvesToDefaults) {
    const auto c = resolve_run_config(json::object());
    EXPECT_EQ(c.model, ModelConfig{});
    EXPECT_TRUE(c.sra.has_value());
    EXPECT_EQ(*c.sra, SraConfig::defaults_for(Family::continuous_flow, 6));
    EXPECT_EQ(c.analysis.layers, (std::vector<int>{1, 2, 3, 4, 5, 6}));
    EXPECT_EQ(c.analysis.timesteps, (std::vector<double>{0, 0.25, 0.5, 0.75}));
    EXPECT_EQ(c.train.batch_size, 64);
    EXPECT_EQ(c.train.learning_rate, 1e-4);
    EXPECT_EQ(c.sample.num_steps, 250);
}

TEST(RunConfig, SeedsAndFamilyPropagate) {
    const auto c = resolve_run_config(json::parse(R"({"seed": 9, "process": {"family": "discrete_denoise"},
        "model": {"preset": "small"}})"));
    EXPECT_EQ(c.train.seed, 9u);
    EXPECT_EQ(c.sample.seed, 9u);
    EXPECT_EQ(c.analysis.probe.seed, 9u);
    EXPECT_EQ(c.sample.family, Family::discrete_denoise);
    EXPECT_EQ(c.sra->student_layer, 3);
    EXPECT_EQ(c.sra->teacher_layer, 7);
    EXPECT_EQ(c.analysis.timesteps, (std::vector<double>{0, 250, 500, 750}));
}

TEST(RunConfig, BaselineSpellings) {
    EXPECT_FALSE(resolve_run_config(json::parse(R"({"sra": null})")).sra.has_value());
    EXPECT_FALSE(resolve_run_config(json::parse(R"({"sra": {"enabled": false}})")).sra.has_value());
    const auto on = resolve_run_config(json::parse(R"({"sra": {"lambda": 0.5}})"));
    ASSERT_TRUE(on.sra.has_value());
    EXPECT_EQ(on.sra->lambda, 0.5);
    EXPECT_EQ(on.sra->teacher_layer, 4);
}

TEST(RunConfig, UnknownKeysAndBadValuesRejected) {
    EXPECT_THROW(resolve_run_config(json::parse(R"({"trian": {}})")), ConfigError);
    EXPECT_THROW(resolve_run_config(json::parse(R"({"train": {"lr": 1}})")), ConfigError);
    EXPECT_THROW(resolve_run_config(json::parse(R"({"train": {"batch_size": "x"}})")), ConfigError);
    EXPECT_THROW(resolve_run_config(json::parse(R"({"process": {"family": "gan"}})")), ConfigError);
    EXPECT_THROW(resolve_run_config(json::parse(R"({"model": {"preset": "huge"}})")), ConfigError);
}

TEST(RunConfig, CrossFieldChecks) {
    EXPECT_THROW(resolve_run_config(json::parse(R"({"sra": {"student_layer": 5, "teacher_layer": 3}})")),
                 ConfigError);
    EXPECT_THROW(resolve_run_config(json::parse(R"({"sra": {"teacher_layer": 7}})")), ConfigError);
    EXPECT_THROW(resolve_run_config(json::parse(R"({"sample": {"family": "discrete_denoise"}})")), ConfigError);
    EXPECT_THROW(resolve_run_config(json::parse(R"({"analysis": {"layers": [9]}})")), ConfigError);
    EXPECT_THROW(resolve_run_config(json::parse(R"({"dataset": {"num_classes": 3}})")), ConfigError);
    EXPECT_THROW(resolve_run_config(json::parse(R"({"sample": {"class_id": 4}})")), ConfigError);
}

TEST(RunConfig, InfiniteClipSpellings) {
    EXPECT_TRUE(std::isinf(resolve_run_config(json::parse(R"({"train": {"grad_clip_norm": "inf"}})")).train.grad_clip_norm));
    EXPECT_TRUE(std::isinf(resolve_run_config(json::parse(R"({"train": {"grad_clip_norm": null}})")).train.grad_clip_norm));
}

TEST(RunConfig, ResolvedConfigReplaysIdentically) {
    test::TempDir dir;
    for (const char* text : {R"({})", R"({"seed": 3, "sra": null, "train": {"grad_clip_norm": "inf"}})",
                             R"({"process": {"family": "discrete_denoise"}, "sra": {"k_per_sample": true}})"}) {
        const auto c = resolve_run_config(json::parse(text));
        write_resolved_config(c, dir.path());
        EXPECT_EQ(load_run_config(dir / "resolved_config.json"), c) << text;
    }
}

TEST(RunConfig, FileWithCommentsAndMissingFile) {
    test::TempDir dir;
    std::ofstream(dir / "c.json") << "// desk run\n{\"train\": {\"total_steps\": 5}}\n";
    EXPECT_EQ(load_run_config(dir / "c.json").train.total_steps, 5);
    EXPECT_THROW(load_run_config(dir / "missing.json"), ConfigError);
    std::ofstream(dir / "bad.json") << "{\"train\": ";
    EXPECT_THROW(load_run_config(dir / "bad.json"), ConfigError);
}

TEST(RunConfig, MakeDatasetChecksGeometry) {
    DatasetConfig d;
    d.num_samples = 16;
    ModelConfig m;
    EXPECT_EQ(make_dataset(d, m).size(), 16);
    m.num_classes = 3;
    EXPECT_THROW(make_dataset(d, m), ConfigError);
}

}  // namespace
}  // namespace sra
