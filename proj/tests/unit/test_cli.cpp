// Drives the rhlp executable end to end and checks files and exit codes.

#include "rhlp/io.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("rhlp_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    int run(const std::string& args, const std::string& env = "") const {
        const std::string cmd = "cd '" + dir_.string() + "' && " + env + " '" RHLP_CLI_PATH "' " + args +
                                " >stdout.txt 2>stderr.txt";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }
    std::string read(const std::string& name) const {
        std::ifstream in(dir_ / name);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }
    void write(const std::string& name, const std::string& text) const { std::ofstream(dir_ / name) << text; }

    fs::path dir_;
};

}  // namespace

TEST_F(Cli, SimulateIsDeterministic) {
    ASSERT_EQ(run("simulate --scenario 1 --n 50 --sigma 1.5 --seed 4 --out a.csv"), 0);
    ASSERT_EQ(run("simulate --scenario 1 --n 50 --sigma 1.5 --seed 4 --out b.csv"), 0);
    EXPECT_EQ(read("a.csv"), read("b.csv"));
    EXPECT_EQ(read("a.csv").substr(0, 10), "t,x,truth\n");
}

TEST_F(Cli, SimulateUsesEnvironmentSeedUnlessOverridden) {
    ASSERT_EQ(run("simulate --scenario 2 --n 20 --out a.csv", "RHLP_SEED=7"), 0);
    ASSERT_EQ(run("simulate --scenario 2 --n 20 --seed 7 --out b.csv"), 0);
    ASSERT_EQ(run("simulate --scenario 2 --n 20 --seed 8 --out c.csv", "RHLP_SEED=7"), 0);
    EXPECT_EQ(read("a.csv"), read("b.csv"));
    EXPECT_NE(read("a.csv"), read("c.csv"));
}

TEST_F(Cli, SimulateZeroNoiseMatchesTruth) {
    ASSERT_EQ(run("simulate --scenario 3 --n 30 --sigma 0 --out s.csv"), 0);
    std::istringstream in(read("s.csv"));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        const auto a = line.find(','), b = line.rfind(',');
        EXPECT_EQ(line.substr(a + 1, b - a - 1), line.substr(b + 1));
    }
}

TEST_F(Cli, BadScenarioExits4) { EXPECT_EQ(run("simulate --scenario 9 --out s.csv"), 4); }

TEST_F(Cli, FitWritesModelCurvesAndBand) {
    ASSERT_EQ(run("simulate --scenario 2 --n 120 --sigma 1 --seed 1 --out d.csv"), 0);
    ASSERT_EQ(run("fit --input d.csv --method rhlp --k 2 --p 2 --n-starts 3 --band 0.05 --seed 3"), 0);
    const rhlp::ModelDocument doc = rhlp::parse_model(read("model.json"));
    EXPECT_EQ(doc.method, "rhlp");
    EXPECT_EQ(doc.K, 2);
    EXPECT_EQ(doc.seed, 3u);
    EXPECT_EQ(doc.n, 120u);
    EXPECT_EQ(read("curves.csv").substr(0, 32), "t,x,fitted,map_label,pi_1,pi_2\n0");
    EXPECT_EQ(read("band.csv").substr(0, 20), "t,center,lower,upper");
}

TEST_F(Cli, FitIsDeterministicGivenSeed) {
    ASSERT_EQ(run("simulate --scenario 1 --n 100 --out d.csv"), 0);
    ASSERT_EQ(run("fit --input d.csv --k 4 --p 2 --n-starts 2 --seed 5 --model-out a.json"), 0);
    ASSERT_EQ(run("fit --input d.csv --k 4 --p 2 --n-starts 2 --seed 5 --threads 2 --model-out b.json"), 0);
    EXPECT_EQ(read("a.json"), read("b.json"));
}

TEST_F(Cli, BaselineFits) {
    ASSERT_EQ(run("simulate --scenario 1 --n 100 --out d.csv"), 0);
    ASSERT_EQ(run("fit --input d.csv --method piecewise --k 4 --p 2"), 0);
    EXPECT_EQ(rhlp::parse_model(read("model.json")).boundaries.size(), 3u);
    ASSERT_EQ(run("fit --input d.csv --method hmm --k 4 --p 2 --n-starts 2"), 0);
    EXPECT_EQ(rhlp::parse_model(read("model.json")).trans.rows(), 4);
    EXPECT_EQ(run("fit --input d.csv --method hmm --k 4 --p 2 --band 0.05"), 4);
}

TEST_F(Cli, SingleComponentOnNoiselessQuadraticReproducesInput) {
    std::string csv = "t,x\n";
    for (int i = 0; i < 25; ++i) {
        const double t = i * 0.2;
        csv += rhlp::format_number(t) + "," + rhlp::format_number(3.0 - t + 0.5 * t * t) + "\n";
    }
    write("q.csv", csv);
    ASSERT_EQ(run("fit --input q.csv --method rhlp --k 1 --p 2"), 0);
    std::istringstream in(read("curves.csv"));
    std::string line;
    std::getline(in, line);
    int rows = 0;
    while (std::getline(in, line)) {
        std::istringstream fields(line);
        std::string t, x, f;
        std::getline(fields, t, ',');
        std::getline(fields, x, ',');
        std::getline(fields, f, ',');
        EXPECT_NEAR(std::stod(f), std::stod(x), 1e-6);
        ++rows;
    }
    EXPECT_EQ(rows, 25);
}

TEST_F(Cli, NormalizeTimeReportsOriginalScale) {
    ASSERT_EQ(run("simulate --scenario 2 --n 150 --sigma 0.5 --seed 2 --out d.csv"), 0);
    ASSERT_EQ(run("fit --input d.csv --k 2 --p 2 --n-starts 3 --normalize-time --model-out n.json "
                  "--curves-out n.csv"),
              0);
    const rhlp::RhlpParams p = rhlp::rhlp_params_of(rhlp::parse_model(read("n.json")));
    std::istringstream in(read("n.csv"));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        std::istringstream fields(line);
        std::string t, x, f;
        std::getline(fields, t, ',');
        std::getline(fields, x, ',');
        std::getline(fields, f, ',');
        EXPECT_NEAR(rhlp::regression_mean(std::stod(t), p), std::stod(f), 1e-6 * std::max(1.0, std::abs(std::stod(f))));
    }
}

TEST_F(Cli, MalformedRowExits2WithLineNumber) {
    write("bad.csv", "t,x\n0,1\n1,2\n2,oops\n");
    EXPECT_EQ(run("fit --input bad.csv --k 1 --p 0"), 2);
    EXPECT_NE(read("stderr.txt").find("line 4"), std::string::npos);
    write("hdr.csv", "a,b\n0,1\n");
    EXPECT_EQ(run("fit --input hdr.csv --k 1 --p 0"), 2);
}

TEST_F(Cli, TooFewPointsExits4) {
    write("small.csv", "t,x\n0,1\n1,2\n2,3\n");
    EXPECT_EQ(run("fit --input small.csv --k 2 --p 1"), 4);
    EXPECT_FALSE(read("stderr.txt").empty());
}

TEST_F(Cli, AllStartsFailedExits3) {
    // Squared residuals overflow, so no start can keep a component alive.
    write("huge.csv", "t,x\n0,0\n1,1e200\n2,-1e200\n3,1e200\n4,0\n5,-1e200\n6,1e200\n7,0\n");
    EXPECT_EQ(run("fit --input huge.csv --k 2 --p 1 --n-starts 2"), 3);
    EXPECT_NE(read("stderr.txt").find("failed"), std::string::npos);
}

TEST_F(Cli, BadArgumentsExit4) {
    EXPECT_EQ(run("fit"), 4);
    EXPECT_EQ(run("frobnicate"), 4);
    write("d.csv", "t,x\n0,1\n");
    EXPECT_EQ(run("fit --input d.csv --method spline"), 4);
}

TEST_F(Cli, BenchmarkSingleCell) {
    ASSERT_EQ(run("benchmark --scenarios 2 --sizes 60 --sigmas 1 --methods piecewise --replicates 1 --out b.csv"), 0);
    const std::string csv = read("b.csv");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
    EXPECT_EQ(csv.substr(0, 18), "scenario,method,n,");
    EXPECT_NE(read("stdout.txt").find("mean_eqm"), std::string::npos);
}

TEST_F(Cli, SelectSingletonAndEmptyGrid) {
    ASSERT_EQ(run("simulate --scenario 1 --n 80 --out d.csv"), 0);
    ASSERT_EQ(run("select --input d.csv --k-min 3 --k-max 3 --p-min 1 --p-max 1 --n-starts 2"), 0);
    EXPECT_NE(read("stdout.txt").find("selected K=3 p=1"), std::string::npos);
    EXPECT_NE(read("selection.csv").find("3,1,"), std::string::npos);
    EXPECT_EQ(run("select --input d.csv --k-min 30 --k-max 31 --p-min 2 --p-max 2"), 4);
}
