#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "cilp/episode.hpp"

using namespace cilp;

namespace {

EpisodeConfig small_config(const std::string& provisioner, std::uint64_t seed = 0) {
    auto c = parse_episode_config(R"({"intervals": 12, "max_hosts": 10, "initial_hosts": ["B2s"],
        "synthetic": {"workloads": 40, "span_intervals": 20}})");
    c.provisioner = provisioner;
    c.seed = seed;
    return c;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(CILP_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::filesystem::path write_temp(const std::string& name, const std::string& text) {
    const auto path = std::filesystem::temp_directory_path() / name;
    std::ofstream(path) << text;
    return path;
}

}  // namespace

TEST_CASE("config parsing") {
    const auto c = parse_episode_config(R"({"gamma": 0.25, "model": {"width": 32}, "train": {"batch_size": 8}})");
    CHECK(c.params.gamma == 0.25);
    CHECK(c.model.width == 32);
    CHECK(c.train.batch_size == 8);
    CHECK(c.intervals == 200);
    CHECK_THROWS_AS(parse_episode_config(R"({"gama": 0.25})"), ConfigError);
    CHECK_THROWS_AS(parse_episode_config(R"({"model": {"depth": 1, "layers": 2}})"), ConfigError);
    CHECK_THROWS_AS(parse_episode_config(R"({"intervals": "ten"})"), ConfigError);
    CHECK_THROWS_AS(parse_episode_config(R"({"provisioner": "psychic"})"), ConfigError);
    CHECK_THROWS_AS(parse_episode_config("{"), ConfigError);
    CHECK_THROWS_AS(load_episode_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("resolve defaults") {
    const auto c = parse_episode_config("{}");
    const auto catalog = resolve_catalog(c);
    CHECK(catalog->size() == 3);
    CHECK(resolve_initial_hosts(c, *catalog).size() == 3);
    CHECK(resolve_templates(c).size() == 120);
    CHECK(resolve_catalog(parse_episode_config(R"({"max_hosts": 7})"))->max_hosts() == 7);
}

TEST_CASE("episodes are deterministic per seed") {
    const auto a = run_episode(small_config("reactive", 3));
    const auto b = run_episode(small_config("reactive", 3));
    CHECK(a.reports.size() == 12);
    CHECK(intervals_csv(a) == intervals_csv(b));
    CHECK(intervals_csv(a) != intervals_csv(run_episode(small_config("reactive", 4))));
}

TEST_CASE("episode output files") {
    auto c = small_config("none", 1);
    const auto dir = std::filesystem::temp_directory_path() / "cilp_test_episode";
    std::filesystem::remove_all(dir);
    c.out_dir = dir;
    const auto s = run_episode(c);
    CHECK(std::filesystem::exists(dir / "intervals.csv"));
    CHECK(std::filesystem::exists(dir / "summary.json"));
    std::ifstream in(dir / "intervals.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header.rfind("t,r,cost_usd,q_e,q_r,q_sla,qos,reward,active_hosts,live_workloads,migrations,", 0) == 0);
    CHECK(s.migrations == 0);
    std::filesystem::remove_all(dir);
}

TEST_CASE("oracle beats reactive on a fixture") {
    double oracle = 0.0, reactive = 0.0;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        oracle += run_episode(small_config("oracle", seed)).mean_reward;
        reactive += run_episode(small_config("reactive", seed)).mean_reward;
    }
    CHECK(oracle >= reactive);
}

TEST_CASE("cilp requires a model") {
    CHECK_THROWS_AS(run_episode(small_config("cilp")), ConfigError);
}

TEST_CASE("compare and sweep tables") {
    const auto base = small_config("reactive");
    const std::vector<std::string> one{"reactive"};
    const std::vector<std::uint64_t> seeds{0, 1, 2};
    const auto rows = compare(base, one, seeds);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].runs == 3);
    CHECK(rows[0].r_std > 0.0);
    const auto csv = compare_csv(rows);
    CHECK(csv.find("r_mean") != std::string::npos);
    CHECK(csv.find("cost_mean") != std::string::npos);
    CHECK(csv.find("qos_mean") != std::string::npos);
    CHECK(csv.find("train_time_s") != std::string::npos);

    const std::vector<std::uint64_t> single{0};
    CHECK(compare(base, one, single)[0].r_std == 0.0);

    auto oracle = small_config("oracle");
    const std::vector<double> gammas{0.0, 1.0};
    const auto sweep = sweep_gamma(oracle, gammas, single);
    REQUIRE(sweep.size() == 2);
    CHECK(sweep[0].stats.reward_mean == sweep[0].stats.r_mean);
    CHECK(sweep_csv(sweep).rfind("gamma,", 0) == 0);
}

TEST_CASE("cli exit codes") {
    const auto bad = write_temp("cilp_test_bad_config.json", R"({"intervals": 5, "unknown_key": 1})");
    CHECK(run_cli("simulate --config " + bad.string()) == 2);
    CHECK(run_cli("simulate --config /nonexistent/config.json") == 2);
    CHECK(run_cli("bogus-subcommand") == 2);
    CHECK(run_cli("simulate --provisioner cilp --intervals 3") == 2);

    const auto good = write_temp("cilp_test_good_config.json",
                                 R"({"intervals": 4, "synthetic": {"workloads": 20, "span_intervals": 10}})");
    CHECK(run_cli("simulate --config " + good.string()) == 0);
    CHECK(run_cli("compare --seeds 2 --provisioners none,reactive --config " + good.string()) == 0);
    std::filesystem::remove(bad);
    std::filesystem::remove(good);
}
