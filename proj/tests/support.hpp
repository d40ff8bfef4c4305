#pragma once

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "demux/random.hpp"
#include "demux/types.hpp"

namespace fs = std::filesystem;

namespace testing {

inline const fs::path kFixtures = DEMUX_FIXTURES_DIR;

// Removed on scope exit.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("demux-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct RunResult {
  int code = -1;
  std::string out;  // stdout and stderr together
};

// Runs the demux binary with `args` (already shell-quoted where needed).
inline RunResult run_cli(const std::string& args, const std::string& env = "") {
  static std::atomic<int> counter{0};
  const fs::path log = fs::temp_directory_path() /
                       ("demux-cli-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) + ".log");
  const std::string cmd = env + (env.empty() ? "" : " ") + "'" DEMUX_CLI_PATH "' " + args + " > '" +
                          log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(log);
  fs::remove(log);
  return r;
}

inline std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

// --- dataset builders ------------------------------------------------------

inline demux::Example seq_example(std::string id, std::vector<double> rep, std::vector<double> probs,
                                  std::string lang = "xx") {
  demux::Example ex;
  ex.id = std::move(id);
  ex.language = std::move(lang);
  ex.text_hash = std::hash<std::string>{}(ex.id);
  ex.representation = std::move(rep);
  ex.payload = demux::SeqProbs{std::move(probs)};
  return ex;
}

inline demux::Dataset seq_dataset(std::size_t dim, std::vector<demux::Example> examples) {
  demux::Dataset ds;
  ds.task = demux::TaskKind::SequenceLevel;
  ds.dim = dim;
  ds.examples = std::move(examples);
  return ds;
}

// Random probability vector over `classes` classes.
inline std::vector<double> random_probs(demux::SplitMix64& rng, std::size_t classes) {
  std::vector<double> p(classes);
  double total = 0.0;
  for (auto& v : p) {
    v = rng.uniform() + 1e-3;
    total += v;
  }
  for (auto& v : p) v /= total;
  return p;
}

// Pool of `n` sequence examples with uniform points in [-1, 1]^dim and random
// 3-class payloads. Ids are zero-padded so string order equals position order.
inline demux::Dataset random_seq_pool(demux::SplitMix64& rng, std::size_t n, std::size_t dim,
                                      const std::string& prefix = "s", std::size_t languages = 1) {
  std::vector<demux::Example> ex;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> rep(dim);
    for (auto& v : rep) v = 2.0 * rng.uniform() - 1.0;
    char id[32];
    std::snprintf(id, sizeof id, "%s%05zu", prefix.c_str(), i);
    ex.push_back(seq_example(id, std::move(rep), random_probs(rng, 3), "l" + std::to_string(i % languages)));
  }
  return seq_dataset(dim, std::move(ex));
}

// --- oracles -----------------------------------------------------------------

inline double naive_l2(const std::vector<double>& a, const std::vector<double>& b) {
  long double acc = 0.0L;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<long double>(a[i] - b[i]) * (a[i] - b[i]);
  return static_cast<double>(std::sqrt(acc));
}

inline double naive_target_distance(const std::vector<double>& x, const demux::Dataset& targets) {
  double acc = 0.0;
  for (const auto& t : targets.examples) acc += naive_l2(x, t.representation);
  return acc / static_cast<double>(targets.size());
}

// Every b-subset of [0, n) in lexicographic order.
template <typename Fn>
void for_each_subset(std::size_t n, std::size_t b, Fn&& fn) {
  std::vector<std::size_t> idx(b);
  std::iota(idx.begin(), idx.end(), 0);
  if (b > n) return;
  for (;;) {
    fn(idx);
    std::size_t i = b;
    while (i > 0 && idx[i - 1] == n - b + i - 1) --i;
    if (i == 0) return;
    ++idx[i - 1];
    for (std::size_t j = i; j < b; ++j) idx[j] = idx[j - 1] + 1;
  }
}

struct SubsetOptimum {
  std::vector<std::size_t> best;
  double best_cost = 0.0;
  double runner_up = 0.0;  // cost of the second-best subset
};

// Exhaustive argmin of summed per-item cost.
inline SubsetOptimum best_subset(const std::vector<double>& cost, std::size_t b) {
  SubsetOptimum out;
  out.best_cost = INFINITY;
  out.runner_up = INFINITY;
  for_each_subset(cost.size(), b, [&](const std::vector<std::size_t>& s) {
    double c = 0.0;
    for (std::size_t i : s) c += cost[i];
    if (c < out.best_cost) {
      out.runner_up = out.best_cost;
      out.best_cost = c;
      out.best = s;
    } else if (c < out.runner_up) {
      out.runner_up = c;
    }
  });
  return out;
}

struct NaiveNeighbor {
  std::size_t index;
  double squared;
};

// Double loop over every source point; ties in distance go to the lower index.
inline std::vector<NaiveNeighbor> naive_knn(const demux::Dataset& source, const std::vector<double>& q,
                                            std::size_t k) {
  std::vector<NaiveNeighbor> all;
  for (std::size_t i = 0; i < source.size(); ++i) {
    double s = 0.0;
    for (std::size_t d = 0; d < q.size(); ++d) {
      const double diff = q[d] - source.examples[i].representation[d];
      s += diff * diff;
    }
    all.push_back({i, s});
  }
  std::stable_sort(all.begin(), all.end(),
                   [](const NaiveNeighbor& a, const NaiveNeighbor& b) { return a.squared < b.squared; });
  all.resize(std::min(k, all.size()));
  return all;
}

inline double naive_margin(std::vector<double> p) {
  std::sort(p.begin(), p.end(), std::greater<>());
  return p[0] - p[1];
}

// Two-pass textbook Pearson.
inline double two_pass_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace testing
