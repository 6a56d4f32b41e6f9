#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qosbridge/cni.hpp"
#include "qosbridge/daemon_api.hpp"
#include "qosbridge/textio.hpp"
#include "support/node.hpp"

namespace testing_support {

// Contract fixtures under tests/fixtures/cni. Each file is
//   {"name", "about", "steps": [{"env", "stdin"|"stdinRaw", "expect"}], "finalState"?}
// with expect = {"exit", "stdout": versions|prevResult|empty, "code", "bindings"}.
// Steps run in order against one fresh node.
struct FixtureResult {
  std::string name;
  std::vector<std::string> problems;
  bool ok() const { return problems.empty(); }
};

inline std::vector<std::filesystem::path> cni_fixture_files(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() == ".json") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline FixtureResult run_cni_fixture(const std::filesystem::path& file) {
  using nlohmann::json;
  namespace cni = qosbridge::cni;
  const json fx = json::parse(qosbridge::textio::read_file(file));
  FixtureResult result{fx.at("name").get<std::string>(), {}};
  auto problem = [&](std::size_t step, const std::string& what) {
    result.problems.push_back("step " + std::to_string(step + 1) + ": " + what);
  };

  Node node;
  const auto initial = node.snapshot();
  cni::DaemonConnector connect = [&](const std::filesystem::path&) -> std::unique_ptr<qosbridge::DaemonClient> {
    return std::make_unique<qosbridge::InProcessDaemonClient>(*node.daemon);
  };

  const auto& steps = fx.at("steps");
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const auto& st = steps[i];
    std::map<std::string, std::string> env = st.at("env").get<std::map<std::string, std::string>>();
    const std::string input = st.contains("stdinRaw") ? st["stdinRaw"].get<std::string>() : st.at("stdin").dump();
    const auto out = cni::run_plugin(env, input, connect);
    const auto& ex = st.at("expect");

    if (out.exit_code != ex.at("exit").get<int>()) {
      problem(i, "exit " + std::to_string(out.exit_code) + " (stdout " + out.stdout_text + ")");
    }
    if (ex.contains("code")) {
      try {
        auto doc = json::parse(out.stdout_text);
        if (doc.value("code", -1) != ex["code"].get<int>()) problem(i, "error code in " + out.stdout_text);
        if (!doc.contains("msg") || !doc.contains("cniVersion")) problem(i, "incomplete error document");
      } catch (const json::exception&) {
        problem(i, "error output is not JSON: " + out.stdout_text);
      }
    }
    const std::string want = ex.value("stdout", std::string{});
    if (want == "empty" && !out.stdout_text.empty()) problem(i, "expected no output, got " + out.stdout_text);
    if (want == "prevResult") {
      const auto& prev = st.at("stdin").at("prevResult");
      if (out.stdout_text != prev.dump() + "\n") problem(i, "result differs from prevResult: " + out.stdout_text);
    }
    if (want == "versions") {
      try {
        auto doc = json::parse(out.stdout_text);
        auto got = doc.at("supportedVersions").get<std::vector<std::string>>();
        if (got != cni::supported_versions() || std::find(got.begin(), got.end(), "1.0.0") == got.end()) {
          problem(i, "version list " + out.stdout_text);
        }
      } catch (const json::exception&) {
        problem(i, "VERSION output is not a version document: " + out.stdout_text);
      }
    }
    if (ex.contains("bindings") && node.daemon->bindings().size() != ex["bindings"].get<std::size_t>()) {
      problem(i, std::to_string(node.daemon->bindings().size()) + " bindings");
    }
  }
  if (fx.value("finalState", std::string{}) == "initial" && node.snapshot() != initial) {
    result.problems.push_back("state differs from the initial state");
  }
  return result;
}

}  // namespace testing_support
