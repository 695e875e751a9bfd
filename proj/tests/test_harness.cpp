#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include <unistd.h>

#include "curematch/harness.hpp"

using namespace curematch;
namespace fs = std::filesystem;

namespace {

BenchmarkConfig tiny() {
    BenchmarkConfig c;
    c.scenarios = {"time_only", "cure_only"};
    c.methods = {"euclidean", "oracle", "propensity", "partial_oracle"};
    c.n = 1500;
    c.k = 20;
    c.reps = 2;
    c.seed = 3;
    return c;
}

fs::path scratch(const std::string& name) {
    return fs::temp_directory_path() / ("curematch_harness_" + std::to_string(::getpid())) / name;
}

}  // namespace

TEST(Harness, NormalizationOrdersAndValidates) {
    const BenchmarkConfig c = normalized(tiny());
    EXPECT_EQ(c.scenarios, (std::vector<std::string>{"cure_only", "time_only"}));
    EXPECT_EQ(c.methods, (std::vector<std::string>{"oracle", "partial_oracle", "euclidean", "propensity"}));
    BenchmarkConfig bad = tiny();
    bad.methods = {"magic"};
    EXPECT_THROW(normalized(bad), DataError);
    bad = tiny();
    bad.k = 600;
    EXPECT_THROW(normalized(bad), DataError);
    bad = tiny();
    bad.reps = 0;
    EXPECT_THROW(normalized(bad), DataError);
}

TEST(Harness, ConfigJsonRejectsUnknownKeys) {
    const nlohmann::json j = tiny();
    EXPECT_EQ(j.get<BenchmarkConfig>(), tiny());
    nlohmann::json bad = j;
    bad["replications"] = 3;
    EXPECT_THROW(bad.get<BenchmarkConfig>(), SchemaError);
}

TEST(Harness, MaeIsOnPercentScaleAndCountsExclusions) {
    std::vector<HteRecord> r(3);
    r[0].hte_cure = 0.10;
    r[0].truth_cure = 0.05;
    r[0].time_valid = true;
    r[0].hte_time = 12.0;
    r[0].truth_time = 10.0;
    r[1].hte_cure = -0.02;
    r[1].truth_cure = 0.0;
    r[1].time_valid = true;
    r[1].hte_time = 4.0;
    r[1].truth_time = 8.0;
    r[2].hte_cure = 0.0;
    r[2].truth_cure = 0.03;
    r[2].truth_time = 1.0;
    const MaeSummary s = mae(r);
    EXPECT_NEAR(s.cure, 100.0 * (0.05 + 0.02 + 0.03) / 3.0, 1e-12);
    EXPECT_DOUBLE_EQ(s.time, 3.0);
    EXPECT_EQ(s.excluded, 1);
    EXPECT_EQ(s.n_time, 2);
}

TEST(Harness, SdUsesReplicationDenominator) {
    MaeCell c;
    c.per_rep = {1.0, 2.0, 4.0};
    finalize_cell(c);
    EXPECT_DOUBLE_EQ(c.mean, 7.0 / 3.0);
    EXPECT_NEAR(c.sd, std::sqrt(((1 - 7.0 / 3) * (1 - 7.0 / 3) + (2 - 7.0 / 3) * (2 - 7.0 / 3) +
                                 (4 - 7.0 / 3) * (4 - 7.0 / 3)) / 2.0),
                1e-14);
}

TEST(Harness, BenchmarkIsReproducibleAndIndependentOfJobs) {
    BenchmarkConfig c = tiny();
    const MaeTable a = run_benchmark(c);
    c.jobs = 3;
    const MaeTable b = run_benchmark(c);
    EXPECT_EQ(a, b);
    EXPECT_EQ(table_csv(a), table_csv(b));
    for (const auto& cell : a.cells) {
        EXPECT_FALSE(cell.failed) << cell.scenario << "/" << cell.method << ": " << cell.error;
        EXPECT_EQ(cell.per_rep.size(), 2u);
    }
    // Replications draw different data.
    const MaeCell& e = a.cell("cure_only", "euclidean", "cure");
    EXPECT_NE(e.per_rep[0], e.per_rep[1]);
}

TEST(Harness, ReportRoundTripsAndAuditAgrees) {
    BenchmarkConfig c = tiny();
    c.scenarios = {"cure_only"};
    c.methods = {"partial_oracle", "euclidean"};
    c.dump_subjects = true;
    c.output_dir = scratch("audit").string();
    fs::create_directories(c.output_dir);
    const MaeTable t = run_benchmark(c);
    report(t, c.output_dir);
    std::ifstream in(fs::path(c.output_dir) / "mae_table.json");
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    EXPECT_EQ(parse_table_json(text), t);
    EXPECT_TRUE(fs::exists(subject_dump_path(c.output_dir, "cure_only", false, 1, "euclidean")));
    const AuditResult audit = audit_report(t, c.output_dir);
    EXPECT_TRUE(audit.passed) << (audit.problems.empty() ? "" : audit.problems.front());
    EXPECT_EQ(audit.files_checked, 4);
    fs::remove_all(scratch(""));
}

TEST(Harness, FailedCellsAreReportedAsFail) {
    MaeTable t;
    t.config = tiny();
    MaeCell ok;
    ok.scenario = "cure_only";
    ok.method = "oracle";
    ok.estimand = "cure";
    ok.per_rep = {5.0, 7.0};
    finalize_cell(ok);
    MaeCell bad = ok;
    bad.estimand = "time";
    bad.per_rep.clear();
    bad.failed = true;
    bad.error = "rep 0: no subject has a valid time effect";
    finalize_cell(bad);
    t.cells = {ok, bad};
    const std::string csv = table_csv(t);
    EXPECT_NE(csv.find("oracle,Oracle,6,1.4142135623730951,0,FAIL,FAIL,0"), std::string::npos) << csv;
    const nlohmann::json j = t;
    EXPECT_TRUE(j["cells"][1]["mean"].is_null());
    EXPECT_EQ(parse_table_json(table_json(t)), t);
}

TEST(Harness, CsvHasTableLayout) {
    BenchmarkConfig c = tiny();
    c.scenarios = {"cure_only"};
    c.methods = {"cox", "oracle"};
    c.reps = 1;
    const std::string csv = table_csv(run_benchmark(c));
    EXPECT_EQ(csv.substr(0, csv.find('\n')),
              "method,label,cure_only_cure_mean,cure_only_cure_sd,cure_only_cure_excluded,"
              "cure_only_time_mean,cure_only_time_sd,cure_only_time_excluded");
    EXPECT_LT(csv.find("\noracle,"), csv.find("\ncox,"));
}

TEST(Harness, MethodRegistry) {
    EXPECT_EQ(kMethods.size(), 9u);
    EXPECT_EQ(kMethods.front().id, "oracle");
    EXPECT_EQ(kMethods.back().id, "cox");
    EXPECT_THROW(method_rank("nope"), DataError);
    EXPECT_EQ(replication_seed(1, "cure_only", false, 0), replication_seed(1, "cure_only", false, 0));
    EXPECT_NE(replication_seed(1, "cure_only", false, 0), replication_seed(1, "cure_only", true, 0));
}
