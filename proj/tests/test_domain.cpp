#include <doctest.h>

#include <string>

#include "cilp/domain.hpp"

using namespace cilp;

namespace {

const char* kOneType = R"(max_hosts = 12
[[vm_type]]
name = "B2s"
cpu_ips = 4000
ram_gb = 4
disk_gb = 8
cost_per_hour_usd = 0.09
provision_mean_s = 60
provision_std_s = 8
power_watts = [48, 51.2, 54.4, 57.6, 60.8, 64, 67.2, 70.4, 73.6, 76.8, 80]
)";

std::string error_of(std::string_view text) {
    try {
        parse_catalog(text);
    } catch (const std::exception& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST_CASE("default catalog") {
    const auto c = default_catalog();
    REQUIRE(c.size() == 3);
    CHECK(c.max_hosts() == 200);
    CHECK(c.find("B2s")->ram_gb == 4.0);
    CHECK(c.find("B4ms")->ram_gb == 16.0);
    CHECK(c.find("B8ms")->ram_gb == 32.0);
    CHECK(c.find("B2s")->cost_per_hour == 0.09);
    CHECK(c.max_cost_per_hour() == 0.333);
    CHECK(c.max_capacity() == c.find("B8ms")->capacity());
    CHECK_THROWS_AS(c.find("B16"), std::out_of_range);
}

TEST_CASE("catalog parse") {
    const auto c = parse_catalog(kOneType);
    CHECK(c.max_hosts() == 12);
    const auto& b2s = *c.find("B2s");
    CHECK(b2s.cost_per_hour == 0.09);
    CHECK(b2s.provision_delay == GaussianDelay{60.0, 8.0});
    const auto table = linear_power_table(80.0);
    for (std::size_t i = 0; i < kPowerTablePoints; ++i) CHECK(b2s.power_watts[i] == doctest::Approx(table[i]));
}

TEST_CASE("catalog round trip is byte stable") {
    const auto text = serialize_catalog(default_catalog());
    const auto parsed = parse_catalog(text);
    CHECK(serialize_catalog(parsed) == text);
    REQUIRE(parsed.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(*parsed.types()[i] == *default_catalog().types()[i]);
}

TEST_CASE("catalog errors") {
    CHECK(error_of("max_hosts = 3\n") == "catalog must be non-empty");
    CHECK(error_of("[[vm_type]]\nname = \"x\"\n").find("line 1: missing field 'cpu_ips'") != std::string::npos);
    CHECK(error_of("[[vm_type]]\nname = \"x\"\ncpu_ips = abc\n").find("line 3") != std::string::npos);
    CHECK(error_of("speed = 3\n").find("unknown top-level key") != std::string::npos);

    std::string zero = kOneType;
    zero.replace(zero.find("ram_gb = 4"), 10, "ram_gb = 0");
    CHECK(error_of(zero).find("ram_gb") != std::string::npos);

    std::string dup = std::string(kOneType) + std::string(kOneType).substr(std::string(kOneType).find("[[vm_type]]"));
    CHECK(error_of(dup).find("duplicate vm type") != std::string::npos);

    std::string falling = kOneType;
    falling.replace(falling.find("[48, 51.2"), 9, "[48, 40.0");
    CHECK(error_of(falling).find("non-decreasing") != std::string::npos);
}

TEST_CASE("power table interpolation") {
    const auto& b2s = *default_catalog().find("B2s");
    CHECK(b2s.power_at(0.0) == doctest::Approx(48.0));
    CHECK(b2s.power_at(1.0) == doctest::Approx(80.0));
    CHECK(b2s.power_at(0.55) == doctest::Approx(48.0 + 0.55 * 32.0));
    CHECK(b2s.power_at(3.0) == b2s.power_at(1.0));
    CHECK(b2s.power_at(-1.0) == b2s.power_at(0.0));
}

TEST_CASE("trace parse") {
    const auto w = parse_traces("interval,workload_id,cpu_ips,ram_gb,disk_gb\n0,7,1000,1,2\n1,7,1200,1.5,2\n");
    REQUIRE(w.size() == 1);
    CHECK(w[0].id == 7);
    CHECK(w[0].length() == 2);
    CHECK(w[0].trace[1] == DemandVector{1200.0, 1.5, 2.0});
    CHECK(w[0].sla_deadline == 1.5 * 2 * 300.0);

    const auto shuffled = parse_traces(
        "workload_id,interval,ram_gb,cpu_ips,disk_gb\n3,6,2,500,1\n3,5,1,400,1\n9,0,1,100,1\n");
    REQUIRE(shuffled.size() == 2);
    CHECK(shuffled[0].id == 3);
    CHECK(shuffled[0].arrival_interval == 5);
    CHECK(shuffled[0].trace[0].cpu == 400.0);
}

TEST_CASE("trace errors") {
    auto error = [](std::string_view csv) {
        try {
            parse_traces(csv);
        } catch (const ParseError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    const std::string header = "interval,workload_id,cpu_ips,ram_gb,disk_gb\n";
    CHECK(error(header + "0,1,100,-1,2\n") == "trace row 2, column 'ram_gb': demand must be >= 0");
    CHECK(error("interval,workload_id,cpu_ips,ram_gb\n").find("missing column 'disk_gb'") != std::string::npos);
    CHECK(error(header + "0,1,100,1,2\n2,1,100,1,2\n").find("non-contiguous") != std::string::npos);
    CHECK(error(header + "0,1,1e,1,2\n").find("column 'cpu_ips'") != std::string::npos);
    CHECK(error("").find("empty") != std::string::npos);
}

TEST_CASE("trace round trip is byte stable") {
    const auto templates = synthesize_sinusoidal_traces({}, 3);
    const auto text = serialize_traces(templates);
    const auto parsed = parse_traces(text);
    CHECK(serialize_traces(parsed) == text);
    CHECK(parsed.size() == templates.size());
}

TEST_CASE("sla deadline default") {
    CHECK(default_sla_deadline(4, 300.0) == 1800.0);
    CHECK(default_sla_deadline(4, 300.0, 2.0) == 2400.0);
}

TEST_CASE("arrival synthesis") {
    const auto templates = constant_traces(10, 3, {100.0, 1.0, 1.0});
    CHECK(fit_arrival_rate(templates) == 1.0);

    const auto a = synthesize_arrivals(templates, 50, 2.0, 1);
    CHECK(a == synthesize_arrivals(templates, 50, 2.0, 1));
    CHECK(a != synthesize_arrivals(templates, 50, 2.0, 2));
    CHECK(synthesize_arrivals(templates, 50, 0.0, 1).empty());
    for (const auto& arrival : a) {
        CHECK(arrival.workload.arrival_interval == arrival.interval);
        CHECK(arrival.interval < 50);
    }

    double total = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) total += static_cast<double>(synthesize_arrivals(templates, 200, seed).size());
    CHECK(total / 10.0 >= 160.0);
    CHECK(total / 10.0 <= 240.0);

    CHECK_THROWS_AS(synthesize_arrivals(templates, 0, 1.0, 1), ConfigError);
    CHECK_THROWS_AS(synthesize_arrivals(std::vector<Workload>{}, 5, 1.0, 1), ConfigError);
}

TEST_CASE("workload and host features") {
    Workload w{1, 3, {{10.0, 1.0, 1.0}, {20.0, 2.0, 2.0}}, 900.0, 0.0};
    CHECK(workload_feature(w, 3) == w.trace[0]);
    CHECK(workload_feature(w, 4) == w.trace[1]);
    CHECK_THROWS_AS(workload_feature(w, 5), WorkloadCompleted);
    CHECK_THROWS_AS(workload_feature(w, 2), std::out_of_range);

    const auto& b2s = *default_catalog().find("B2s");
    const FeatureVector empty = host_feature(b2s, {});
    CHECK(empty.head<3>().isZero());
    CHECK(empty(3) == 4000.0);
    CHECK(empty(4) == 4.0);

    const std::vector<DemandVector> two{{100.0, 1.0, 1.0}, {200.0, 1.0, 1.0}};
    CHECK(host_feature(b2s, two)(0) == 300.0);
    const std::vector<DemandVector> over{{9000.0, 10.0, 10.0}};
    CHECK(host_feature(b2s, over)(0) == 9000.0);
}

TEST_CASE("synthetic traces are deterministic and non-negative") {
    const auto a = synthesize_sinusoidal_traces({}, 5);
    CHECK(a == synthesize_sinusoidal_traces({}, 5));
    CHECK(a.size() == 120);
    for (const auto& w : a) {
        CHECK(w.length() >= 2);
        CHECK(w.length() <= 8);
        for (const auto& d : w.trace) CHECK(d.non_negative());
    }
    const auto constant = constant_traces(4, 5, {100.0, 1.0, 2.0});
    REQUIRE(constant.size() == 4);
    CHECK(constant[2].arrival_interval == 2);
    CHECK(constant[2].trace.back() == DemandVector{100.0, 1.0, 2.0});
}
