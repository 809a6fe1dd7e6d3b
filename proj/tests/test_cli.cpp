#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>

#include "gramsld/data_model.hpp"
#include "test_util.hpp"

using gramsld::Json;

namespace {

struct Outcome {
    int code;
    std::string out;
};

Outcome gram_sld(const std::string& args, const testutil::TempDir& dir) {
    const auto out = dir / "stdout.txt";
    const std::string cmd = std::string(GRAM_SLD_BIN) + " " + args + " > " + out.string() + " 2> " +
                            (dir / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, testutil::read_text(out)};
}

}  // namespace

TEST(Cli, SimulateThenRun) {
    testutil::TempDir dir("cli");
    auto r = gram_sld("simulate --out " + (dir / "scn").string() + " --n-train 80 --n-test 30 --seed 9", dir);
    ASSERT_EQ(r.code, 0);
    const auto config = (dir / "scn" / "config.json").string();
    EXPECT_NE(r.out.find("config.json"), std::string::npos);

    r = gram_sld("cluster --config " + config, dir);
    ASSERT_EQ(r.code, 0);
    EXPECT_GE(Json::parse(r.out)["k"].get<int>(), 2);

    r = gram_sld("select-keys --config " + config + " --ratio 0.1", dir);
    ASSERT_EQ(r.code, 0);
    EXPECT_TRUE(std::filesystem::exists(dir / "scn" / "work" / "keyset.json"));

    r = gram_sld("run --config " + config + " --beta 1.0", dir);
    ASSERT_EQ(r.code, 0);
    const auto summary = Json::parse(r.out);
    EXPECT_GE(summary["iterations"].get<int>(), 1);
    EXPECT_FALSE(summary["termination"].get<std::string>().empty());
}

TEST(Cli, ValidationErrorsExitTwo) {
    testutil::TempDir dir("cli");
    EXPECT_EQ(gram_sld("run --config " + (dir / "absent.json").string(), dir).code, 2);
    gram_sld("simulate --out " + (dir / "scn").string() + " --n-train 30 --n-test 10", dir);
    EXPECT_EQ(gram_sld("run --config " + (dir / "scn" / "config.json").string() + " --beta -1", dir).code, 2);
    EXPECT_EQ(gram_sld("run --config " + (dir / "scn" / "config.json").string() + " --ratio 0", dir).code, 2);
    testutil::write_text(dir / "bad.jsonl", "{\"id\": \"a\", \"d1\": 5}\n");
    EXPECT_EQ(gram_sld("score --predictions " + (dir / "bad.jsonl").string(), dir).code, 2);
}

TEST(Cli, PluginFailureExitsThree) {
    testutil::TempDir dir("cli");
    gram_sld("simulate --out " + (dir / "scn").string() + " --n-train 30 --n-test 10", dir);
    const Json cfg{{"unlabeled_manifest", "scn/train_manifest.jsonl"},
                   {"test_manifest", "scn/test_manifest.jsonl"},
                   {"ground_truth", "scn/ground_truth.jsonl"},
                   {"work_dir", "work"},
                   {"annotation", "oracle"},
                   {"detector",
                    {{"type", "external"},
                     {"train", "echo crashed >&2; exit 9 # {train_manifest} {work_dir}"},
                     {"predict", "exit 9 # {predict_manifest} {work_dir}"},
                     {"timeout", 30}}}};
    testutil::write_text(dir / "ext.json", cfg.dump());
    const auto r = gram_sld("run --config " + (dir / "ext.json").string(), dir);
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(testutil::read_text(dir / "stderr.txt").find("crashed"), std::string::npos);
}

TEST(Cli, ScoreAndGramDiff) {
    testutil::TempDir dir("cli");
    testutil::write_text(dir / "p.jsonl",
                         "{\"id\":\"a\",\"d1\":[{\"class\":\"car\",\"bbox\":[0,0,10,10],\"confidence\":0.95}],"
                         "\"d2\":[{\"class\":\"car\",\"bbox\":[0,0,10,9],\"confidence\":0.92}]}\n"
                         "{\"id\":\"b\",\"d1\":[],\"d2\":[]}\n");
    auto r = gram_sld("score --predictions " + (dir / "p.jsonl").string(), dir);
    ASSERT_EQ(r.code, 0);
    const auto scores = Json::parse(r.out);
    EXPECT_EQ(scores["a"], 1);
    EXPECT_EQ(scores["b"], 0);

    testutil::write_text(dir / "f1.csv", "2\n1,0\n");
    testutil::write_text(dir / "f2.csv", "2\n0,0\n");
    r = gram_sld("gram-diff --f1 " + (dir / "f1.csv").string() + " --f2 " + (dir / "f2.csv").string() + " --out " +
                     (dir / "d").string(),
                 dir);
    ASSERT_EQ(r.code, 0) << testutil::read_text(dir / "stderr.txt");
    const auto j = Json::parse(r.out);
    EXPECT_DOUBLE_EQ(j["mse"].get<double>(), 0.25);
    EXPECT_TRUE(std::filesystem::exists(dir / "d.pgm"));
}
