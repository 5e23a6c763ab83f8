// Acceptance suite: one PASS/FAIL line per criterion. Criteria 1-13 run in
// process; criterion 14 reruns the whole suite through `branchimm check-all`
// with a different thread count and compares the CSV bodies byte for byte.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include "branchimm/acceptance.hpp"

namespace fs = std::filesystem;
using namespace branchimm;

int main(int argc, char** argv) {
  acceptance::Options opt;
  if (argc > 1) opt.seed = std::stoull(argv[1]);
  opt.jobs = 1;

  const fs::path root = fs::temp_directory_path() / ("branchimm_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  const fs::path first = root / "in_process", second = root / "cli";

  auto results = acceptance::run_criteria(
      opt, [](const acceptance::CriterionResult& r) { std::cout << acceptance::format_line(r) << std::endl; });
  OutputHeader header;
  header.seed = opt.seed;
  header.notes.push_back("command=check-all");
  acceptance::write_outputs(results, first, header);

  acceptance::CriterionResult det{14, "determinism", false, {}, {}, 0.0};
  const auto t0 = std::chrono::steady_clock::now();
  const std::string cmd = std::string("\"") + BRANCHIMM_CLI_PATH + "\" check-all --seed " + std::to_string(opt.seed) +
                          " --jobs 2 --out \"" + second.string() + "\" > \"" + (root / "cli.log").string() + "\" 2>&1";
  const int rc = std::system(cmd.c_str());
  det.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!fs::exists(second / "claims.csv")) {
    det.detail = "check-all produced no output (exit status " + std::to_string(rc) + ")";
  } else {
    const std::string a = acceptance::csv_bodies(first), b = acceptance::csv_bodies(second);
    det.pass = !a.empty() && a == b;
    det.detail = std::string("CSV bodies ") + (det.pass ? "byte-identical" : "DIFFER") + " across jobs=1 (in process) and jobs=2 (CLI), " +
                 std::to_string(a.size()) + " bytes";
  }
  std::cout << acceptance::format_line(det) << std::endl;
  results.push_back(det);

  int passed = 0;
  for (const auto& r : results) passed += r.pass;
  std::cout << passed << "/" << results.size() << " criteria passed" << std::endl;
  fs::remove_all(root);
  return passed == static_cast<int>(results.size()) ? 0 : 1;
}
