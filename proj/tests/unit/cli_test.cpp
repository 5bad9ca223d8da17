#include <gtest/gtest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <signal.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <sstream>
#include <thread>

#include <support/test_support.hpp>
#include <topoembed/cli.hpp>

using namespace topoembed;
using testkit::TempDir;
namespace fs = std::filesystem;

extern char** environ;

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome run(std::vector<std::string> args) {
    args.insert(args.begin(), "topoembed");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> parts;
    std::stringstream in(text);
    for (std::string part; std::getline(in, part, sep);) parts.push_back(part);
    return parts;
}

int free_port() {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
    socklen_t len = sizeof addr;
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
    ::close(fd);
    return ntohs(addr.sin_port);
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        testkit::write_pgm_dir(scratch_ / "corpus", testkit::toy_corpus(2));
        corpus_ = (scratch_ / "corpus").string();
        project_ = (scratch_ / "p").string();
    }

    Outcome ingest(int per_class = 2) {
        return run({"ingest", "--input", corpus_, "--format", "dir", "--per-class", std::to_string(per_class), "--out",
                    project_});
    }

    Outcome full() {
        auto r = ingest();
        if (r.code) return r;
        r = run({"compute", "--project", project_, "--threads", "2"});
        if (r.code) return r;
        return run({"embed", "--project", project_, "--methods", "mds,isomap,tsne", "--k", "4", "--perplexity", "5",
                    "--iterations", "200"});
    }

    TempDir scratch_;
    std::string corpus_;
    std::string project_;
};

}  // namespace

TEST_F(Cli, StagesSucceed) {
    const auto r = full();
    ASSERT_EQ(r.code, cli::exit_ok) << r.err;
    EXPECT_TRUE(r.out.empty());
    const auto p = project::load_project(project_);
    EXPECT_EQ(p.items.size(), 20u);
    EXPECT_EQ(p.embeddings.size(), 3u);
    EXPECT_EQ(p.config.sigma, 0.01);
    EXPECT_EQ(p.config.resolution, 10u);
    EXPECT_EQ(p.config.isomap_k, 4u);
}

TEST_F(Cli, EmbedIsRepeatable) {
    ASSERT_EQ(full().code, cli::exit_ok);
    const auto first = project::read_file(fs::path(project_) / "embeddings.json");
    const auto again = run({"embed", "--project", project_});
    ASSERT_EQ(again.code, cli::exit_ok) << again.err;
    EXPECT_EQ(project::read_file(fs::path(project_) / "embeddings.json"), first);
}

TEST_F(Cli, ComputeIsThreadCountIndependent) {
    ASSERT_EQ(ingest().code, cli::exit_ok);
    ASSERT_EQ(run({"compute", "--project", project_, "--threads", "1"}).code, cli::exit_ok);
    const auto one = project::read_file(fs::path(project_) / "manifest.json");
    ASSERT_EQ(run({"compute", "--project", project_, "--threads", "4"}).code, cli::exit_ok);
    EXPECT_EQ(project::read_file(fs::path(project_) / "manifest.json"), one);
}

TEST_F(Cli, ComputeOptionsOverrideStoredConfig) {
    ASSERT_EQ(ingest().code, cli::exit_ok);
    const auto r = run({"compute", "--project", project_, "--sigma", "0.05", "--resolution", "4", "--mode", "sample",
                        "--no-invert", "--global-scale"});
    ASSERT_EQ(r.code, cli::exit_ok) << r.err;
    const auto cfg = project::read_config(project_);
    EXPECT_EQ(cfg.sigma, 0.05);
    EXPECT_EQ(cfg.resolution, 4u);
    EXPECT_EQ(cfg.mode, vectorize::ImageMode::sample);
    EXPECT_FALSE(cfg.invert);
    EXPECT_TRUE(cfg.global_scale);
}

TEST_F(Cli, RunWithConfigFile) {
    auto cfg = testkit::toy_config(corpus_);
    cfg.per_class = 2;
    cfg.perplexity = 5;
    testkit::write_bytes(scratch_ / "cfg.json", project::config_to_json(cfg).dump());
    const auto r = run({"run", "--config", (scratch_ / "cfg.json").string(), "--out", project_, "--threads", "2"});
    ASSERT_EQ(r.code, cli::exit_ok) << r.err;
    EXPECT_EQ(project::load_project(project_).embeddings.size(), 3u);
}

TEST_F(Cli, ExportDistancesCsv) {
    ASSERT_EQ(full().code, cli::exit_ok);
    const auto r = run({"export", "--project", project_, "--what", "distances", "--format", "csv"});
    ASSERT_EQ(r.code, cli::exit_ok) << r.err;
    const auto lines = split(r.out, '\n');
    ASSERT_EQ(lines.size(), 21u);
    const auto header = split(lines[0], ',');
    ASSERT_EQ(header.size(), 20u);
    EXPECT_EQ(header[0], "0_0");
    const auto p = project::load_project(project_);
    for (std::size_t i = 0; i < 20; ++i) {
        const auto row = split(lines[i + 1], ',');
        ASSERT_EQ(row.size(), 20u);
        for (std::size_t j = 0; j < 20; ++j) EXPECT_EQ(std::stod(row[j]), p.distances->at(i, j));
    }
}

TEST_F(Cli, ExportToFileAndJson) {
    ASSERT_EQ(full().code, cli::exit_ok);
    const auto file = (scratch_ / "emb.csv").string();
    ASSERT_EQ(run({"export", "--project", project_, "--what", "embedding", "--out", file}).code, cli::exit_ok);
    const auto lines = split(project::read_file(file), '\n');
    EXPECT_EQ(lines[0], "method,id,label,x,y");
    EXPECT_EQ(lines.size(), 1u + 3u * 20u);

    const auto images = run({"export", "--project", project_, "--what", "pimages", "--format", "json"});
    ASSERT_EQ(images.code, cli::exit_ok);
    const auto j = nlohmann::json::parse(images.out);
    ASSERT_EQ(j.size(), 20u);
    EXPECT_EQ(j[0]["pixels"].size(), 100u);

    const auto d = nlohmann::json::parse(
        run({"export", "--project", project_, "--what", "distances", "--format", "json"}).out);
    EXPECT_EQ(d["item_ids"].size(), 20u);
}

TEST_F(Cli, DataErrorsExitWith2) {
    auto r = run({"ingest", "--input", (scratch_ / "absent").string(), "--format", "dir", "--out", project_});
    EXPECT_EQ(r.code, cli::exit_data);
    EXPECT_NE(r.err.find("absent"), std::string::npos) << r.err;
    EXPECT_EQ(run({"compute", "--project", (scratch_ / "absent").string()}).code, cli::exit_data);
    EXPECT_EQ(ingest(5).code, cli::exit_data);  // only two drawings per digit
    ASSERT_EQ(ingest().code, cli::exit_ok);
    EXPECT_EQ(run({"export", "--project", project_, "--what", "distances"}).code, cli::exit_data);
    EXPECT_EQ(run({"serve", "--project", (scratch_ / "absent").string(), "--port", std::to_string(free_port())}).code,
              cli::exit_data);
}

TEST_F(Cli, UsageErrorsExitWith64) {
    EXPECT_EQ(run({}).code, cli::exit_usage);
    EXPECT_EQ(run({"frobnicate"}).code, cli::exit_usage);
    EXPECT_EQ(ingest(0).code, cli::exit_usage);
    ASSERT_EQ(full().code, cli::exit_ok);
    EXPECT_EQ(run({"embed", "--project", project_, "--methods", "umap"}).code, cli::exit_usage);
    EXPECT_EQ(run({"export", "--project", project_, "--what", "everything"}).code, cli::exit_usage);
    EXPECT_EQ(run({"compute", "--project", project_, "--mode", "splat"}).code, cli::exit_usage);
    EXPECT_EQ(run({"embed", "--project", project_, "--perplexity", "30"}).code, cli::exit_usage);
}

TEST_F(Cli, HelpExitsCleanly) {
    const auto r = run({"--help"});
    EXPECT_EQ(r.code, cli::exit_ok);
    EXPECT_NE(r.out.find("serve"), std::string::npos);
}

TEST_F(Cli, ServeAnswersMeta) {
    ASSERT_EQ(full().code, cli::exit_ok);
    const int port = free_port();
    const std::string port_text = std::to_string(port);
    std::vector<std::string> args{TOPOEMBED_CLI_PATH, "serve", "--project", project_, "--port", port_text};
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    argv.push_back(nullptr);
    pid_t pid = 0;
    ASSERT_EQ(posix_spawn(&pid, TOPOEMBED_CLI_PATH, nullptr, nullptr, argv.data(), environ), 0);

    httplib::Client client("127.0.0.1", port);
    int status = 0;
    for (int attempt = 0; attempt < 200 && status != 200; ++attempt) {
        if (auto res = client.Get("/api/meta")) status = res->status;
        if (status != 200) std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    EXPECT_EQ(status, 200);
    if (auto res = client.Get("/api/meta")) {
        EXPECT_EQ(nlohmann::json::parse(res->body)["n"], 20);
    }

    ::kill(pid, SIGTERM);
    int wstatus = 0;
    ASSERT_EQ(::waitpid(pid, &wstatus, 0), pid);
    EXPECT_TRUE(WIFEXITED(wstatus));
    EXPECT_EQ(WEXITSTATUS(wstatus), cli::exit_ok);
}
