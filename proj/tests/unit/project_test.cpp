#include <gtest/gtest.h>

#include <support/test_support.hpp>
#include <topoembed/project.hpp>

using namespace topoembed;
using testkit::TempDir;
namespace fs = std::filesystem;

namespace {

nlohmann::json manifest_of(const fs::path& root) {
    return nlohmann::json::parse(project::read_file(root / "manifest.json"));
}

std::size_t count_files(const fs::path& dir) {
    return static_cast<std::size_t>(std::distance(fs::directory_iterator(dir), fs::directory_iterator{}));
}

class ToyProject : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        scratch_ = new TempDir("toy-project");
        root_ = testkit::build_toy_project(scratch_->path());
    }
    static void TearDownTestSuite() {
        delete scratch_;
        scratch_ = nullptr;
    }

    static TempDir* scratch_;
    static fs::path root_;
};

TempDir* ToyProject::scratch_ = nullptr;
fs::path ToyProject::root_;

}  // namespace

TEST_F(ToyProject, ArtifactCounts) {
    EXPECT_EQ(count_files(root_ / "diagrams"), 10u);
    EXPECT_EQ(count_files(root_ / "cycles"), 10u);
    EXPECT_EQ(count_files(root_ / "pimages"), 10u);
    EXPECT_EQ(fs::file_size(root_ / "distances.bin"), 800u);

    const auto manifest = manifest_of(root_);
    EXPECT_EQ(manifest["format"], "topoembed-project");
    EXPECT_EQ(manifest["pipeline_version"], project::pipeline_version);
    EXPECT_EQ(manifest["stages"], (nlohmann::json{"ingest", "compute", "embed"}));
    EXPECT_EQ(manifest["parameters"]["image"]["sigma"], 0.01);
    EXPECT_EQ(manifest["parameters"]["image"]["resolution"], 10);
    EXPECT_FALSE(manifest["parameters"].contains("threads"));
    EXPECT_EQ(manifest["artifacts"].size(), 2u + 3u * 10u + 2u);
    for (const auto& [path, digest] : manifest["artifacts"].items())
        EXPECT_EQ(digest, encoding::sha256_hex(project::read_file(root_ / path))) << path;

    const auto embeddings = nlohmann::json::parse(project::read_file(root_ / "embeddings.json"));
    EXPECT_EQ(embeddings["embeddings"].size(), 3u);
    EXPECT_EQ(embeddings["item_ids"].size(), 10u);
}

TEST_F(ToyProject, LoadMatchesRecomputation) {
    const auto p = project::load_project(root_);
    ASSERT_EQ(p.items.size(), 10u);
    ASSERT_TRUE(p.computed());
    ASSERT_TRUE(p.distances.has_value());
    EXPECT_EQ(p.embeddings.size(), 3u);
    EXPECT_EQ(p.config.perplexity, 3.0);

    const auto corpus = testkit::toy_corpus();
    filtration::ComplexCache cache;
    std::vector<vectorize::PersistenceImage> images;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        EXPECT_EQ(p.items[i], corpus[i]);
        EXPECT_EQ(p.find(corpus[i].id), std::optional<std::size_t>{i});
        const auto t = persistence::compute_topology(cache.get(16, 16), ingest::to_filtration_function(corpus[i]),
                                                     corpus[i].id);
        EXPECT_EQ(p.diagrams[i], t.diagram);
        EXPECT_EQ(p.cycles[i], t.cycles);
        images.push_back(vectorize::persistence_image(t.diagram));
        EXPECT_EQ(p.images[i].pixels, images.back().pixels);
    }
    EXPECT_EQ(p.distances->d, analysis::distance_matrix(images).d);
    EXPECT_FALSE(p.find("missing").has_value());
}

TEST_F(ToyProject, ToyDigitsHaveTheirLoops) {
    const auto p = project::load_project(root_);
    auto loops = [&](const std::string& id) {
        std::size_t strong = 0;
        for (const auto& c : p.cycles[*p.find(id)]) strong += c.pair.persistence >= 0.3;
        return strong;
    };
    EXPECT_EQ(loops("0_0"), 1u);
    EXPECT_EQ(loops("1_0"), 0u);
    EXPECT_EQ(loops("8_0"), 2u);
}

TEST_F(ToyProject, RerunIsByteIdenticalAcrossThreadCounts) {
    TempDir scratch;
    auto cfg = testkit::toy_config(scratch_->path() / "corpus");
    cfg.threads = 3;
    project::run_pipeline(cfg, scratch / "threaded");
    EXPECT_EQ(manifest_of(scratch / "threaded"), manifest_of(root_));

    cfg.threads = 1;
    project::run_pipeline(cfg, scratch / "threaded");
    EXPECT_EQ(manifest_of(scratch / "threaded"), manifest_of(root_));
    EXPECT_EQ(project::read_file(scratch / "threaded" / "distances.bin"), project::read_file(root_ / "distances.bin"));
}

TEST_F(ToyProject, MissingArtifact) {
    TempDir scratch;
    fs::copy(root_, scratch / "p", fs::copy_options::recursive);
    fs::remove(scratch / "p" / "pimages" / "3_0.json");
    try {
        project::load_project(scratch / "p");
        FAIL() << "expected MissingArtifact";
    } catch (const MissingArtifact& e) {
        EXPECT_NE(std::string(e.what()).find("3_0"), std::string::npos) << e.what();
    }
}

TEST_F(ToyProject, TamperedDistancesFailChecksum) {
    TempDir scratch;
    fs::copy(root_, scratch / "p", fs::copy_options::recursive);
    auto bytes = project::read_file(scratch / "p" / "distances.bin");
    bytes[100] ^= 1;
    testkit::write_bytes(scratch / "p" / "distances.bin", bytes);
    EXPECT_THROW(project::load_project(scratch / "p"), ChecksumMismatch);
}

TEST_F(ToyProject, VersionMismatch) {
    TempDir scratch;
    fs::copy(root_, scratch / "p", fs::copy_options::recursive);
    auto manifest = manifest_of(scratch / "p");
    manifest["pipeline_version"] = project::pipeline_version + 1;
    testkit::write_bytes(scratch / "p" / "manifest.json", manifest.dump());
    EXPECT_THROW(project::load_project(scratch / "p"), VersionMismatch);
}

TEST(ProjectStages, IngestThenComputeThenEmbed) {
    TempDir scratch;
    testkit::write_pgm_dir(scratch / "corpus", testkit::toy_corpus(3));
    auto cfg = testkit::toy_config(scratch / "corpus");
    cfg.per_class = 2;
    cfg.methods = {analysis::Method::mds};
    const fs::path root = scratch / "p";

    EXPECT_EQ(project::ingest_stage(cfg, root), 20u);
    auto p = project::load_project(root);
    EXPECT_EQ(p.items.size(), 20u);
    EXPECT_FALSE(p.computed());
    EXPECT_THROW(project::embed_stage(root, cfg), MissingArtifact);

    project::compute_stage(root, cfg);
    p = project::load_project(root);
    EXPECT_TRUE(p.computed());
    EXPECT_TRUE(p.embeddings.empty());
    EXPECT_EQ(fs::file_size(root / "distances.bin"), 8u * 20u * 20u);

    project::embed_stage(root, cfg);
    p = project::load_project(root);
    ASSERT_EQ(p.embeddings.size(), 1u);
    EXPECT_EQ(p.embeddings.begin()->second.n, 20u);

    // a new ingest discards downstream artifacts
    project::ingest_stage(cfg, root);
    EXPECT_FALSE(fs::exists(root / "distances.bin"));
    EXPECT_FALSE(fs::exists(root / "embeddings.json"));
    EXPECT_EQ(manifest_of(root)["stages"], nlohmann::json{"ingest"});
}

TEST(ProjectStages, ComputeRecordsImageParameters) {
    TempDir scratch;
    testkit::write_pgm_dir(scratch / "corpus", testkit::toy_corpus());
    auto cfg = testkit::toy_config(scratch / "corpus");
    project::ingest_stage(cfg, scratch / "p");
    cfg.resolution = 5;
    cfg.mode = vectorize::ImageMode::sample;
    cfg.global_scale = true;
    project::compute_stage(scratch / "p", cfg);
    const auto p = project::load_project(scratch / "p");
    EXPECT_EQ(p.config.resolution, 5u);
    EXPECT_EQ(p.images[0].pixels.size(), 25u);
    const auto stored = nlohmann::json::parse(project::read_file(scratch / "p" / "pimages" / "0_0.json"));
    EXPECT_EQ(stored["mode"], "sample");
    EXPECT_FALSE(stored["global_scale"].is_null());
}

TEST(ProjectInput, IdxDirectoryAndDerivedLabels) {
    TempDir scratch;
    fs::create_directories(scratch / "idx");
    const auto [images, labels] = testkit::write_idx(scratch / "idx", testkit::toy_corpus(2), true, "toy");
    project::InputSpec from_dir{(scratch / "idx").string(), "idx", ""};
    project::InputSpec from_file{images.string(), "idx", ""};
    project::InputSpec explicit_labels{images.string(), "idx", labels.string()};
    const auto a = project::read_corpus(from_dir);
    EXPECT_EQ(a.size(), 20u);
    EXPECT_EQ(a, project::read_corpus(from_file));
    EXPECT_EQ(a, project::read_corpus(explicit_labels));
    EXPECT_THROW(project::read_corpus({(scratch / "nowhere").string(), "idx", ""}), Error);
}

TEST(ProjectConfig, JsonRoundTripAndValidation) {
    project::ProjectConfig cfg;
    cfg.input = {"/data/x", "dir", ""};
    cfg.per_class = 7;
    cfg.invert = false;
    cfg.sigma = 0.02;
    cfg.mode = vectorize::ImageMode::sample;
    cfg.methods = {analysis::Method::tsne, analysis::Method::mds};
    cfg.perplexity = 12.5;
    cfg.embedding_seed = 9;
    const auto back = project::config_from_json(project::config_to_json(cfg));
    EXPECT_EQ(project::config_to_json(back), project::config_to_json(cfg));

    const auto partial = project::config_from_json(nlohmann::json{{"per_class", 3}, {"threads", 2}});
    EXPECT_EQ(partial.per_class, 3u);
    EXPECT_EQ(partial.threads, 2u);
    EXPECT_EQ(partial.sigma, 0.01);

    cfg.per_class = 0;
    EXPECT_THROW(cfg.validate(), InvalidArgument);
    EXPECT_THROW(project::config_from_json(nlohmann::json{{"per_class", "many"}}), InvalidArgument);
    EXPECT_THROW(project::config_from_json(nlohmann::json{{"embedding", {{"methods", {"umap"}}}}}), InvalidArgument);
}

TEST(Serialize, DistancesAreLittleEndian) {
    analysis::DistanceMatrix D{2, {0.0, 1.0, 1.0, 0.0}, {"a", "b"}};
    const auto bytes = serialize::distances_to_bytes(D);
    ASSERT_EQ(bytes.size(), 32u);
    // 1.0 = 0x3ff0000000000000
    EXPECT_EQ(static_cast<unsigned char>(bytes[8 + 7]), 0x3fu);
    EXPECT_EQ(static_cast<unsigned char>(bytes[8 + 6]), 0xf0u);
    EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 0x00u);
    EXPECT_EQ(serialize::distances_from_bytes(bytes, {"a", "b"}), D);
    EXPECT_THROW(serialize::distances_from_bytes(bytes.substr(1), {"a", "b"}), IoError);
}

TEST(Serialize, DoublesRoundTripBitExactly) {
    vectorize::PersistenceImage img{"x", 2, {0.1, 1.0 / 3.0, 2.8665140754094659e-7, 5e-324}};
    const auto text = serialize::image_to_json(img, {}).dump();
    const auto back = serialize::image_from_json(nlohmann::json::parse(text));
    EXPECT_EQ(back.pixels, img.pixels);
}

TEST(Encoding, Base64AndSha256) {
    const std::vector<std::uint8_t> bytes{'f', 'o', 'o', 'b', 'a'};
    EXPECT_EQ(encoding::base64_encode(bytes), "Zm9vYmE=");
    EXPECT_EQ(encoding::base64_decode("Zm9vYmE="), bytes);
    EXPECT_EQ(encoding::base64_decode(""), std::vector<std::uint8_t>{});
    EXPECT_THROW(encoding::base64_decode("Zm9"), IoError);
    EXPECT_EQ(encoding::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
