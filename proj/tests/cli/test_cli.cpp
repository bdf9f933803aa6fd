// SPDX-License-Identifier: Apache-2.0
//
// Runs the procrnn binary as a subprocess.
#include <doctest.h>
#include <sys/wait.h>

#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>

#include "oracles.hpp"
#include "procrnn/fileio.hpp"
#include "procrnn/training.hpp"

#ifndef PROCRNN_CLI
#error "PROCRNN_CLI must name the procrnn binary"
#endif

namespace fs = std::filesystem;
using procrnn::read_file;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(PROCRNN_CLI) + " " + args + " 2>/dev/null";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string shell_out(const std::string& cmd) {
  std::string out;
  FILE* pipe = popen(cmd.c_str(), "r");
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) out.append(buf.data(), n);
  pclose(pipe);
  return out;
}

const fs::path& workdir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "procrnn-cli-tests";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string at(const std::string& name) { return (workdir() / name).string(); }

void write_text(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

/// Labeled "contains K" data, written once.
const std::string& k_data() {
  static const std::string path = [] {
    const auto traces = procrnn::testing::contains_k_traces(2000, 0.25, 11);
    std::ofstream out(at("k.csv"));
    procrnn::write_labeled_csv(out, traces);
    return at("k.csv");
  }();
  return path;
}

/// A model trained on k_data(), trained once.
const std::string& k_model() {
  static const std::string path = [] {
    const Run r = run("train --data " + k_data() + " --iterations 5 --traces-per-iteration 10000 --batch-size 32 --seed 1 --quiet --model " +
                      at("k.bin") + " --metrics " + at("k-metrics.csv"));
    REQUIRE(r.code == 0);
    return at("k.bin");
  }();
  return path;
}

const char* kEvents =
    "case,activity,timestamp,kind\n"
    "a,Start,2020-01-01 00:00:00,x\n"
    "a,End,2020-01-20 00:00:00,x\n"
    "b,Start,2020-01-01 00:00:00,\n"
    "b,End,2020-01-08 00:00:00,\n"
    "c,Start,2020-01-01 00:00:00,rfi\n"
    "d,Start,2020-01-05 00:00:00,rfi\n"
    "d,Fix it,2020-01-05 00:00:00,rfi\n";

}  // namespace

TEST_CASE("prepare labels by duration and prints a summary") {
  write_text(at("events.csv"), kEvents);
  const Run r = run("prepare --events " + at("events.csv") + " --label-duration 2w --out " + at("p.csv"));
  REQUIRE(r.code == 0);
  CHECK(r.out.find("4          1           2                    3") != std::string::npos);
  const auto traces = procrnn::parse_labeled_csv(at("p.csv"));
  REQUIRE(traces.size() == 4);
  CHECK(traces[0].label);
  CHECK_FALSE(traces[1].label);
  CHECK(traces[3].activities == std::vector<std::string>{"Start", "Fix_it"});

  // Threshold 0: every multi-event case with a nonzero span is positive.
  REQUIRE(run("prepare --events " + at("events.csv") + " --label-duration 0d --out " + at("p0.csv")).code == 0);
  const auto zero = procrnn::parse_labeled_csv(at("p0.csv"));
  CHECK(zero[0].label);
  CHECK(zero[1].label);
  CHECK_FALSE(zero[2].label);
  CHECK_FALSE(zero[3].label);
}

TEST_CASE("prepare labels by attribute and caps cases") {
  write_text(at("events.csv"), kEvents);
  REQUIRE(run("prepare --events " + at("events.csv") + " --label-attribute kind=rfi --max-cases 3 --out " + at("pa.csv"))
              .code == 0);
  const auto traces = procrnn::parse_labeled_csv(at("pa.csv"));
  REQUIRE(traces.size() == 3);
  CHECK_FALSE(traces[0].label);
  CHECK_FALSE(traces[1].label);
  CHECK(traces[2].label);
}

TEST_CASE("prepare usage errors") {
  write_text(at("events.csv"), kEvents);
  CHECK(run("prepare --events " + at("events.csv") + " --label-duration 2w --label-attribute kind=rfi --out " +
            at("u.csv"))
            .code == 2);
  CHECK(run("prepare --events " + at("events.csv") + " --out " + at("u.csv")).code == 2);
  CHECK(run("prepare --events " + at("events.csv") + " --label-duration 2 --out " + at("u.csv")).code == 2);
  CHECK_FALSE(fs::exists(at("u.csv")));
  write_text(at("bad-events.csv"), "case,activity,timestamp\na,x,2020-01-01 00:00:00\na,y,soon\n");
  CHECK(run("prepare --events " + at("bad-events.csv") + " --label-duration 2w --out " + at("u.csv")).code == 3);
  CHECK(run("frobnicate").code == 2);
}

TEST_CASE("train writes model, metrics and manifest") {
  const Run r = run("train --data " + k_data() +
                    " --iterations 2 --traces-per-iteration 500 --hidden 8 --quiet --model " + at("t.bin") +
                    " --metrics " + at("t.csv"));
  REQUIRE(r.code == 0);
  CHECK(fs::exists(at("t.bin")));
  const std::string metrics = read_file(at("t.csv"));
  CHECK(metrics.rfind("iteration,fraction,accuracy,auroc,tp,fp,fn,tn,train_seconds,eval_seconds\n", 0) == 0);
  CHECK(std::count(metrics.begin(), metrics.end(), '\n') == 1 + 2 * 4);

  const auto manifest = nlohmann::json::parse(read_file(at("t.bin.manifest.json")));
  CHECK(manifest["status"] == "completed");
  CHECK(manifest["config"]["hidden_size"] == 8);
  CHECK(manifest["iterations"].size() == 2);
  CHECK(manifest["outputs"]["model"] == at("t.bin"));
  CHECK(!manifest["finished_at"].is_null());
  // Digest checked against the system tool.
  const std::string expected = shell_out("sha256sum " + k_data()).substr(0, 64);
  CHECK(manifest["inputs"][0]["sha256"] == expected);
}

TEST_CASE("train is reproducible") {
  const std::string common = "train --data " + k_data() +
                             " --iterations 2 --traces-per-iteration 700 --hidden 6 --cell lstm --quiet --no-timings";
  REQUIRE(run(common + " --model " + at("d1.bin") + " --metrics " + at("d1.csv")).code == 0);
  REQUIRE(run(common + " --model " + at("d2.bin") + " --metrics " + at("d2.csv")).code == 0);
  CHECK(read_file(at("d1.csv")) == read_file(at("d2.csv")));
  CHECK(read_file(at("d1.bin")) == read_file(at("d2.bin")));
  auto strip = [](nlohmann::json j) {
    j.erase("started_at");
    j.erase("finished_at");
    j["outputs"] = nullptr;
    j["result"].erase("train_seconds_total");
    j["result"].erase("eval_seconds_total");
    for (auto& it : j["iterations"]) {
      it.erase("train_seconds");
      it.erase("eval_seconds");
    }
    return j;
  };
  CHECK(strip(nlohmann::json::parse(read_file(at("d1.bin.manifest.json")))) ==
        strip(nlohmann::json::parse(read_file(at("d2.bin.manifest.json")))));
}

TEST_CASE("train configuration and data errors") {
  CHECK(run("train --data " + at("missing.csv") + " --model " + at("x.bin") + " --metrics " + at("x.csv")).code == 3);
  CHECK(run("train --data " + k_data() + " --cell rnn --model " + at("x.bin") + " --metrics " + at("x.csv")).code == 2);
  CHECK(run("train --data " + k_data() + " --prefixes 25,50 --model " + at("x.bin") + " --metrics " + at("x.csv"))
            .code == 2);
  write_text(at("bad.csv"), "label,sequence\ntrue,A B\nperhaps,C\n");
  CHECK(run("train --data " + at("bad.csv") + " --model " + at("x.bin") + " --metrics " + at("x.csv")).code == 3);
  CHECK_FALSE(fs::exists(at("x.bin")));
  CHECK_FALSE(fs::exists(at("x.csv")));
}

TEST_CASE("evaluate") {
  const std::string model = k_model();
  REQUIRE(run("evaluate --model " + model + " --data " + k_data() + " --prefixes 100 --out " + at("e.csv")).code == 0);
  const std::string csv = read_file(at("e.csv"));
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);

  REQUIRE(run("evaluate --model " + model + " --data " + k_data() + " --out " + at("e4.csv")).code == 0);
  const std::string all = read_file(at("e4.csv"));
  CHECK(std::count(all.begin(), all.end(), '\n') == 5);

  CHECK(run("evaluate --model " + at("none.bin") + " --data " + k_data() + " --out " + at("e-missing.csv")).code == 4);
  CHECK_FALSE(fs::exists(at("e-missing.csv")));

  std::string bytes = read_file(model);
  bytes[bytes.find("format_version 1") + 15] = '7';
  write_text(at("future.bin"), bytes);
  CHECK(run("evaluate --model " + at("future.bin") + " --data " + k_data() + " --out " + at("e-future.csv")).code == 4);
  CHECK_FALSE(fs::exists(at("e-future.csv")));
}

TEST_CASE("predict") {
  const std::string model = k_model();
  const Run yes = run("predict --model " + model + " --sequence \"A B K C\"");
  REQUIRE(yes.code == 0);
  REQUIRE(yes.out.rfind("true,", 0) == 0);
  CHECK(std::stod(yes.out.substr(5)) > 0.9);

  const Run no = run("predict --model " + model + " --sequence \"A B C D\"");
  CHECK(no.out.rfind("false,", 0) == 0);

  const Run unknown = run("predict --model " + model + " --sequence \"zz yy xx\"");
  CHECK(unknown.code == 0);
  CHECK((unknown.out.rfind("true,", 0) == 0 || unknown.out.rfind("false,", 0) == 0));
  CHECK(run("predict --model " + model + " --sequence \"zz yy xx\"").out == unknown.out);

  CHECK(run("predict --model " + model + " --sequence \"  \"").code == 2);
  CHECK(run("predict --model " + model).code == 2);

  const Run batch = run("predict --model " + model + " --data " + k_data());
  CHECK(batch.code == 0);
  CHECK(std::count(batch.out.begin(), batch.out.end(), '\n') == 2000);
}

TEST_CASE("single-trace prediction latency") {
  const std::string model = k_model();
  const auto start = std::chrono::steady_clock::now();
  REQUIRE(run("predict --model " + model + " --sequence \"A B C D E F G H J K\"").code == 0);
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  // Whole process, including start-up and model load.
  CHECK(ms < 100.0);
}
