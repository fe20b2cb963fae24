#include "maeday/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "maeday/baseline.hpp"

namespace maeday {

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("roc_auc: scores and labels differ in length");
  std::size_t positives = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw std::invalid_argument("roc_auc: labels must be 0 or 1");
    positives += static_cast<std::size_t>(l);
  }
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) throw std::invalid_argument("roc_auc: both classes must be present");
  for (double s : scores)
    if (std::isnan(s)) throw std::invalid_argument("roc_auc: NaN score");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Twice the positive rank sum keeps midranks integral.
  std::uint64_t twice_rank_sum = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::size_t tied_pos = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) tied_pos += static_cast<std::size_t>(labels[order[j++]]);
    // Ranks i+1 .. j share the midrank (i + 1 + j) / 2.
    twice_rank_sum += tied_pos * (i + 1 + j);
    i = j;
  }
  const std::uint64_t p = positives, q = negatives;
  // Twice the Mann-Whitney U of the positives.
  const std::uint64_t twice_u = twice_rank_sum - p * (p + 1);
  const std::uint64_t twice_pq = 2 * p * q;
  // Computing the larger half as 1 - (smaller half) makes auc(s, l) + auc(s, 1 - l)
  // round to exactly 1.
  if (2 * twice_u > twice_pq)
    return 1.0 - static_cast<double>(twice_pq - twice_u) / static_cast<double>(twice_pq);
  return static_cast<double>(twice_u) / static_cast<double>(twice_pq);
}

double pixel_auc(std::span<const Map> maps, std::span<const Map> masks) {
  if (maps.size() != masks.size()) throw std::invalid_argument("pixel_auc: one mask per map required");
  std::vector<double> scores;
  std::vector<int> labels;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    if (masks[i].rank() != 2 || maps[i].rank() != 2) throw std::invalid_argument("pixel_auc: maps and masks must be H x W");
    const Map up = resize(maps[i], masks[i].dim(0), masks[i].dim(1));
    for (std::size_t p = 0; p < up.size(); ++p) {
      scores.push_back(up[p]);
      labels.push_back(masks[i][p] > 0.5f ? 1 : 0);
    }
  }
  if (std::find(labels.begin(), labels.end(), 1) == labels.end())
    throw std::invalid_argument("pixel_auc: no anomalous pixels in the pool");
  return roc_auc(scores, labels);
}

Map mask_or_zeros(const Sample& sample, std::size_t height, std::size_t width) {
  if (sample.gt_mask) return *sample.gt_mask;
  return Map({height, width});
}

const char* to_string(Member member) {
  return member == Member::maeday ? "maeday" : "embed";
}

Member parse_member(const std::string& name) {
  if (name == "maeday") return Member::maeday;
  if (name == "embed") return Member::embed;
  throw std::invalid_argument("unknown ensemble member '" + name + "'");
}

namespace {

template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
  jobs = std::min(std::max<std::size_t>(jobs, 1), std::max<std::size_t>(n, 1));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> workers;
  for (std::size_t j = 0; j < jobs; ++j)
    workers.emplace_back([&fn, j, jobs, n] {
      for (std::size_t i = j; i < n; i += jobs) fn(i);
    });
}

struct Aucs {
  double image;
  double pixel;
};

Aucs evaluate_maps(const Dataset& dataset, std::span<const Map> maps, std::span<const double> scores) {
  std::vector<int> labels;
  std::vector<Map> masks;
  for (std::size_t i = 0; i < dataset.test.size(); ++i) {
    const auto& s = dataset.test[i];
    labels.push_back(s.label == Label::anomalous ? 1 : 0);
    masks.push_back(mask_or_zeros(s, maps[i].dim(0), maps[i].dim(1)));
  }
  return {roc_auc(scores, labels), pixel_auc(maps, masks)};
}

double population_std(const std::vector<double>& v, double mean) {
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(v.size()));
}

SeedResult evaluate_seed(const Dataset& dataset, const MaeModel<float>& model, const Protocol& protocol,
                         std::uint64_t shot_seed) {
  SeedResult result;
  result.seed = shot_seed;
  std::vector<Image> shots;
  if (protocol.k_shots > 0) {
    Rng pick(shot_seed);
    result.shots = pick.sample_without_replacement(dataset.train.size(), protocol.k_shots);
    for (auto i : result.shots) shots.push_back(dataset.train[i].image);
  }

  std::optional<MaeModel<float>> adapted;
  std::optional<MemoryBank> bank;
  const bool wants_mae = std::find(protocol.members.begin(), protocol.members.end(), Member::maeday) != protocol.members.end();
  const bool wants_embed = std::find(protocol.members.begin(), protocol.members.end(), Member::embed) != protocol.members.end();
  if (wants_mae && !shots.empty()) {
    Rng rng = Rng::derive(shot_seed, 1);
    adapted.emplace(adapt(model, shots, protocol.finetune, rng));
  }
  const MaeModel<float>& scorer = adapted ? *adapted : model;
  if (wants_embed) {
    Rng rng = Rng::derive(shot_seed, 2);
    bank.emplace(build_bank(model, shots, protocol.coreset_fraction, rng));
  }

  const std::size_t n = dataset.test.size();
  std::vector<AnomalyResult> mae_results(wants_mae ? n : 0), embed_results(wants_embed ? n : 0);
  ScoreOptions options;
  options.n_repetitions = protocol.n_repetitions;
  options.mask_ratio = protocol.mask_ratio;
  options.kernel = protocol.kernel;
  parallel_for(n, protocol.jobs, [&](std::size_t i) {
    const Image& image = dataset.test[i].image;
    if (wants_mae) {
      Rng rng = Rng::derive(protocol.scoring_seed, i);
      mae_results[i] = score(scorer, image, options, rng);
    }
    if (wants_embed) embed_results[i] = bank_score(*bank, model, image);
  });

  std::vector<std::vector<AnomalyResult>> members;
  for (Member m : protocol.members) {
    const auto& results = m == Member::maeday ? mae_results : embed_results;
    std::vector<Map> maps;
    std::vector<double> scores;
    for (const auto& r : results) {
      maps.push_back(r.pixel_map);
      scores.push_back(r.image_score);
    }
    const Aucs a = evaluate_maps(dataset, maps, scores);
    result.members.push_back({m, a.image, a.pixel});
    members.push_back(results);
  }
  if (members.size() == 1) {
    result.image_auc = result.members.front().image_auc;
    result.pixel_auc = result.members.front().pixel_auc;
  } else {
    const auto combined = ensemble_sum(members, protocol.normalize_ensemble);
    std::vector<Map> maps;
    std::vector<double> scores;
    for (const auto& r : combined) {
      maps.push_back(r.pixel_map);
      scores.push_back(r.image_score);
    }
    const Aucs a = evaluate_maps(dataset, maps, scores);
    result.image_auc = a.image;
    result.pixel_auc = a.pixel;
  }
  return result;
}

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

EvalReport run_experiment(const Dataset& dataset, const MaeModel<float>& model, const Protocol& protocol) {
  if (protocol.n_seeds == 0) throw std::invalid_argument("run_experiment: at least one shot seed is required");
  if (protocol.members.empty()) throw std::invalid_argument("run_experiment: no ensemble members");
  if (protocol.k_shots > dataset.train.size())
    throw std::invalid_argument("run_experiment: k = " + std::to_string(protocol.k_shots) + " exceeds the " +
                                std::to_string(dataset.train.size()) + " training images");
  if (protocol.k_shots == 0 &&
      std::find(protocol.members.begin(), protocol.members.end(), Member::embed) != protocol.members.end())
    throw std::invalid_argument("run_experiment: the embedding baseline needs at least one shot");
  if (dataset.test.empty()) throw std::invalid_argument("run_experiment: empty test split");

  EvalReport report;
  report.class_name = dataset.name;
  report.protocol = protocol;
  for (std::size_t i = 0; i < protocol.n_seeds; ++i) {
    const std::uint64_t seed = protocol.seed_base + i;
    // Zero-shot results do not depend on the shot seed.
    if (protocol.k_shots == 0 && !report.seeds.empty()) {
      SeedResult copy = report.seeds.front();
      copy.seed = seed;
      report.seeds.push_back(copy);
      continue;
    }
    report.seeds.push_back(evaluate_seed(dataset, model, protocol, seed));
  }
  std::vector<double> image, pixel;
  for (const auto& s : report.seeds) {
    image.push_back(s.image_auc);
    pixel.push_back(s.pixel_auc);
  }
  report.image_auc_mean = std::accumulate(image.begin(), image.end(), 0.0) / static_cast<double>(image.size());
  report.pixel_auc_mean = std::accumulate(pixel.begin(), pixel.end(), 0.0) / static_cast<double>(pixel.size());
  if (image.size() >= 2) {
    report.image_auc_std = population_std(image, report.image_auc_mean);
    report.pixel_auc_std = population_std(pixel, report.pixel_auc_mean);
  }
  return report;
}

std::string report_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "class,k,seed,image_auc,pixel_auc\n";
  for (const auto& s : report.seeds)
    out << report.class_name << ',' << report.protocol.k_shots << ',' << s.seed << ',' << fixed(s.image_auc) << ','
        << fixed(s.pixel_auc) << '\n';
  return out.str();
}

std::string report_text(const EvalReport& report) {
  const auto& p = report.protocol;
  std::ostringstream out;
  out << "class " << report.class_name << "  k=" << p.k_shots << "  seeds=" << p.n_seeds << " (base " << p.seed_base
      << ")  N=" << p.n_repetitions << "  mask_ratio=" << p.mask_ratio << "  members=";
  for (std::size_t i = 0; i < p.members.size(); ++i) out << (i ? "+" : "") << to_string(p.members[i]);
  out << (p.normalize_ensemble ? " (normalized)" : "") << '\n';
  out << "seed        image_auc  pixel_auc";
  for (Member m : p.members) out << "  " << to_string(m) << ":img/pix";
  out << '\n';
  for (const auto& s : report.seeds) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%-10llu  %9.4f  %9.4f", static_cast<unsigned long long>(s.seed), s.image_auc, s.pixel_auc);
    out << buf;
    for (const auto& m : s.members) {
      std::snprintf(buf, sizeof buf, "  %.4f/%.4f", m.image_auc, m.pixel_auc);
      out << buf;
    }
    out << '\n';
  }
  char buf[128];
  if (report.image_auc_std) {
    std::snprintf(buf, sizeof buf, "mean        %.4f+-%.4f  %.4f+-%.4f\n", report.image_auc_mean, *report.image_auc_std,
                  report.pixel_auc_mean, *report.pixel_auc_std);
  } else {
    std::snprintf(buf, sizeof buf, "mean        %.4f  %.4f\n", report.image_auc_mean, report.pixel_auc_mean);
  }
  out << buf;
  return out.str();
}

std::vector<SweepPoint> sweep_repetitions(const Dataset& dataset, const MaeModel<float>& model,
                                          std::span<const std::size_t> n_list, const SweepOptions& options) {
  if (n_list.empty()) throw std::invalid_argument("sweep_repetitions: no repetition counts");
  for (auto n : n_list) {
    if (n == 0) throw std::invalid_argument("sweep_repetitions: repetition counts must be at least 1");
    if (n > options.pool_size)
      throw std::invalid_argument("sweep_repetitions: N = " + std::to_string(n) + " exceeds the pool of " +
                                  std::to_string(options.pool_size) + " masks");
  }
  if (dataset.test.empty()) throw std::invalid_argument("sweep_repetitions: empty test split");
  const std::size_t images = dataset.test.size();
  // maps_by_n[k][i]: image i's mean map over the first n_list[k] masks.
  std::vector<std::vector<Map>> maps_by_n(n_list.size(), std::vector<Map>(images));
  parallel_for(images, options.jobs, [&](std::size_t i) {
    Rng rng = Rng::derive(options.scoring_seed, i);
    const auto masks = MaskSet::sample(model.config().token_count(), options.mask_ratio, options.pool_size, rng);
    const auto pool = per_mask_error_maps(model, dataset.test[i].image, masks, options.kernel);
    for (std::size_t k = 0; k < n_list.size(); ++k)
      maps_by_n[k][i] = mean_map(std::span<const Map>(pool.data(), n_list[k]));
  });
  std::vector<SweepPoint> out;
  for (std::size_t k = 0; k < n_list.size(); ++k) {
    std::vector<double> scores;
    for (const auto& m : maps_by_n[k]) scores.push_back(*std::max_element(m.values().begin(), m.values().end()));
    const Aucs a = evaluate_maps(dataset, maps_by_n[k], scores);
    out.push_back({n_list[k], a.image, a.pixel});
  }
  return out;
}

std::string sweep_csv(std::span<const SweepPoint> points) {
  std::ostringstream out;
  out << "n,image_auc,pixel_auc\n";
  for (const auto& p : points) out << p.n_repetitions << ',' << fixed(p.image_auc) << ',' << fixed(p.pixel_auc) << '\n';
  return out.str();
}

}  // namespace maeday
