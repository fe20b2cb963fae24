#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "maeday/baseline.hpp"
#include "maeday/checkpoint.hpp"
#include "maeday/data.hpp"
#include "maeday/eval.hpp"
#include "maeday/lora.hpp"
#include "maeday/model.hpp"
#include "maeday/scoring.hpp"

namespace fs = std::filesystem;
using namespace maeday;

namespace {

// Bad input supplied by the user (missing file, malformed value): exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream in(s);
  for (std::string item; std::getline(in, item, sep);)
    if (!item.empty()) out.push_back(item);
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

// key=value lines become --key=value arguments placed ahead of the real flags,
// so flags given on the command line win.
std::vector<std::string> config_args(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  std::vector<std::string> out;
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';' || line[0] == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError(path.string() + ":" + std::to_string(n) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    if (key == "command" || key == "config") continue;
    out.push_back("--" + key + "=" + trim(line.substr(eq + 1)));
  }
  return out;
}

std::vector<fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw UsageError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (e.is_regular_file() && (ext == ".png" || ext == ".ppm")) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw UsageError("no .png or .ppm images in " + dir.string());
  return out;
}

Image load_at(const fs::path& path, std::size_t size) {
  Image img = read_image(path);
  if (img.dim(0) != size || img.dim(1) != size) img = resize(img, size, size);
  return img;
}

void require_file(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw UsageError("missing input file " + path.string());
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string loss_csv(const std::vector<double>& losses) {
  std::ostringstream out;
  out << "step,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < losses.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.8f\n", i, losses[i]);
    out << buf;
  }
  return out.str();
}

// Every resolved option of the subcommand, one key=value per line. The file
// is accepted back through --config.
std::string manifest(const CLI::App& sub) {
  std::ostringstream out;
  out << "command=" << sub.get_name() << '\n';
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string& name = opt->get_lnames().front();
    if (name == "help" || name == "config") continue;
    std::string value;
    if (opt->get_expected_min() == 0) {
      value = opt->count() > 0 && opt->as<bool>() ? "true" : "false";
    } else if (opt->count() > 0) {
      const auto results = opt->reduced_results();
      value = results.empty() ? "" : results.back();
    } else {
      value = opt->get_default_str();
    }
    out << name << '=' << value << '\n';
  }
  return out.str();
}

std::size_t default_jobs() {
  return std::max(1u, std::thread::hardware_concurrency());
}

struct ModelFlags {
  ModelConfig config;
  void add(CLI::App* app) {
    app->add_option("--image-size", config.image_size, "model input resolution");
    app->add_option("--patch-size", config.patch_size);
    app->add_option("--embed-dim", config.embed_dim);
    app->add_option("--depth", config.depth);
    app->add_option("--heads", config.num_heads);
    app->add_option("--decoder-embed-dim", config.decoder_embed_dim);
    app->add_option("--decoder-depth", config.decoder_depth);
    app->add_option("--decoder-heads", config.decoder_num_heads);
    app->add_option("--mlp-ratio", config.mlp_ratio);
    app->add_option("--mask-ratio", config.mask_ratio);
  }
};

struct FinetuneFlags {
  FinetuneConfig config;
  bool full = false;
  void add(CLI::App* app) {
    app->add_option("--iters", config.iterations, "finetuning iterations");
    app->add_option("--lr", config.lr, "learning rate (1e-4 is the usual choice with --full-finetune)");
    app->add_option("--momentum", config.momentum);
    app->add_option("--wd", config.weight_decay, "weight decay");
    app->add_option("--batch", config.batch_size);
    app->add_option("--rank", config.rank, "adapter rank");
    app->add_option("--crop-min", config.crop_min);
    app->add_option("--crop-max", config.crop_max);
    app->add_option("--rotation", config.rotation_degrees, "max rotation in degrees");
    app->add_flag("--full-finetune", full, "update host weights instead of adapters");
  }
  FinetuneConfig resolved() const {
    FinetuneConfig c = config;
    c.full_finetune = full;
    return c;
  }
};

struct Options {
  std::size_t jobs = default_jobs();
  std::uint64_t seed = 0;
  fs::path out;
};

std::uint64_t env_seed(std::uint64_t fallback, const CLI::Option* flag) {
  if (flag && flag->count() > 0) return fallback;
  if (const char* env = std::getenv("MAEDAY_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw UsageError(std::string("MAEDAY_SEED is not an unsigned integer: ") + env);
    }
  }
  return fallback;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Masked-autoencoder anomaly detection"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  std::string config_path;
  Options opt;
  app.add_option("--config", config_path, "key=value file; command-line flags take precedence");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset in the MVTec layout");
  std::string gen_families = "stripes,checker,blob-noise,wood-grain";
  std::size_t gen_train = 64, gen_normal = 32, gen_anomalous = 32;
  SyntheticSpec gen_spec;
  std::string gen_defects = "foreign-patch,scratch,color-spot";
  gen->add_option("--out", opt.out, "dataset root")->required();
  gen->add_option("--families", gen_families, "comma-separated texture families");
  gen->add_option("--defects", gen_defects, "comma-separated defect types");
  gen->add_option("--n-train", gen_train);
  gen->add_option("--n-test-normal", gen_normal);
  gen->add_option("--n-test-anomalous", gen_anomalous);
  gen->add_option("--resolution", gen_spec.resolution);
  gen->add_option("--min-area", gen_spec.min_defect_area, "minimum defect area in pixels");
  gen->add_option("--max-area", gen_spec.max_defect_area, "maximum defect area in pixels");
  auto* gen_seed = gen->add_option("--seed", opt.seed);

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "self-supervised masked-patch pretraining");
  ModelFlags pre_model;
  PretrainConfig pre_cfg;
  fs::path pre_data;
  std::string pre_classes;
  double pre_lr = pre_cfg.adamw.lr;
  std::string pre_optimizer = "adamw";
  std::string pre_loss = "masked";
  pre->add_option("--data", pre_data, "dataset root (MVTec layout)")->required();
  pre->add_option("--classes", pre_classes, "comma-separated classes whose train/good images form the corpus")->required();
  pre->add_option("--out", opt.out, "output checkpoint")->required();
  pre->add_option("--steps", pre_cfg.steps);
  pre->add_option("--batch", pre_cfg.batch_size);
  pre->add_option("--optimizer", pre_optimizer)->check(CLI::IsMember({"adamw", "sgd"}));
  pre->add_option("--lr", pre_lr);
  pre->add_option("--warmup", pre_cfg.warmup_steps);
  pre->add_option("--crop-min", pre_cfg.crop_min, "smallest crop side fraction for augmentation");
  pre->add_option("--flips", pre_cfg.flips, "random flip augmentation");
  pre->add_option("--loss", pre_loss, "patches the loss covers")->check(CLI::IsMember({"masked", "all"}));
  auto* pre_seed = pre->add_option("--seed", opt.seed);
  pre_model.add(pre);

  // finetune
  auto* fin = app.add_subcommand("finetune", "adapt a checkpoint to a few normal shots, then merge");
  FinetuneFlags fin_flags;
  fs::path fin_model, fin_shots;
  fin->add_option("--model", fin_model, "input checkpoint")->required();
  fin->add_option("--shots", fin_shots, "directory of normal images")->required();
  fin->add_option("--out", opt.out, "output checkpoint")->required();
  auto* fin_seed = fin->add_option("--seed", opt.seed);
  fin_flags.add(fin);

  // score
  auto* sco = app.add_subcommand("score", "anomaly maps and image scores for a directory of images");
  fs::path sco_model, sco_images;
  ScoreOptions sco_opt;
  std::size_t kernel_size = 7;
  double kernel_sigma = 1.4;
  bool sco_maps = true;
  sco->add_option("--model", sco_model)->required();
  sco->add_option("--images", sco_images, "directory of query images")->required();
  sco->add_option("--out", opt.out, "output directory")->required();
  sco->add_option("--n-reps", sco_opt.n_repetitions, "masked reconstructions per image");
  sco->add_option("--mask-ratio", sco_opt.mask_ratio);
  sco->add_option("--kernel-size", kernel_size);
  sco->add_option("--sigma", kernel_sigma);
  sco->add_option("--maps", sco_maps, "write _anom.png and raw map files");
  auto* sco_seed = sco->add_option("--seed", opt.seed);
  sco->add_option("--jobs", opt.jobs);

  // eval
  auto* ev = app.add_subcommand("eval", "image and pixel ROC-AUC over shot selections");
  fs::path ev_model, ev_data;
  std::string ev_class, ev_members = "maeday";
  Protocol proto;
  FinetuneFlags ev_ft;
  ev->add_option("--model", ev_model)->required();
  ev->add_option("--data", ev_data, "dataset root (MVTec layout)")->required();
  ev->add_option("--class", ev_class)->required();
  ev->add_option("--out", opt.out, "output directory")->required();
  ev->add_option("--k", proto.k_shots, "shots per selection (0 = zero-shot)");
  ev->add_option("--seeds", proto.n_seeds, "number of shot selections");
  auto* ev_seed = ev->add_option("--seed", opt.seed, "base shot seed; selection i uses seed + i");
  ev->add_option("--scoring-seed", proto.scoring_seed);
  ev->add_option("--n-reps", proto.n_repetitions);
  ev->add_option("--mask-ratio", proto.mask_ratio);
  ev->add_option("--kernel-size", kernel_size);
  ev->add_option("--sigma", kernel_sigma);
  ev->add_option("--members", ev_members, "ensemble members: maeday, embed");
  ev->add_option("--normalize", proto.normalize_ensemble, "min-max normalize members before summing");
  ev->add_option("--coreset", proto.coreset_fraction, "memory bank fraction for the embed member");
  ev->add_option("--jobs", opt.jobs);
  ev_ft.add(ev);

  // sweep-reps
  auto* sw = app.add_subcommand("sweep-reps", "AUC as a function of the number of masked reconstructions");
  fs::path sw_model, sw_data;
  std::string sw_class, sw_list = "1,2,4,8,16,32,64";
  SweepOptions sw_opt;
  sw->add_option("--model", sw_model)->required();
  sw->add_option("--data", sw_data)->required();
  sw->add_option("--class", sw_class)->required();
  sw->add_option("--out", opt.out, "output directory")->required();
  sw->add_option("--n-list", sw_list, "comma-separated repetition counts");
  sw->add_option("--pool", sw_opt.pool_size, "masks drawn per image");
  sw->add_option("--mask-ratio", sw_opt.mask_ratio);
  sw->add_option("--kernel-size", kernel_size);
  sw->add_option("--sigma", kernel_sigma);
  sw->add_option("--scoring-seed", sw_opt.scoring_seed);
  sw->add_option("--jobs", opt.jobs);

  try {
    // Splice config-file entries in right after the subcommand name.
    std::vector<std::string> args(argv + 1, argv + argc);
    for (std::size_t i = 0; i < args.size(); ++i) {
      std::string file;
      if (args[i] == "--config" && i + 1 < args.size()) {
        file = args[i + 1];
        args.erase(args.begin() + static_cast<long>(i), args.begin() + static_cast<long>(i) + 2);
      } else if (args[i].rfind("--config=", 0) == 0) {
        file = args[i].substr(9);
        args.erase(args.begin() + static_cast<long>(i));
      } else {
        continue;
      }
      config_path = file;
      const auto extra = config_args(file);
      std::size_t at = 0;
      for (std::size_t j = 0; j < args.size(); ++j)
        if (app.get_subcommand_no_throw(args[j])) {
          at = j + 1;
          break;
        }
      args.insert(args.begin() + static_cast<long>(at), extra.begin(), extra.end());
      break;
    }
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    const auto kernel = [&] { return gaussian_kernel(kernel_size, kernel_sigma); };
    CLI::App* sub = app.get_subcommands().front();

    if (sub == gen) {
      gen_spec.seed = env_seed(opt.seed, gen_seed);
      gen_spec.defect_types.clear();
      for (const auto& d : split(gen_defects, ',')) gen_spec.defect_types.push_back(parse_defect(d));
      std::size_t total = 0;
      for (const auto& name : split(gen_families, ',')) {
        gen_spec.family = parse_family(name);
        auto ds = generate_dataset(gen_spec, gen_train, gen_normal, gen_anomalous);
        write_mvtec(opt.out, ds);
        total += ds.train.size() + ds.test.size();
      }
      write_text(opt.out / "manifest.txt", manifest(*sub));
      std::printf("gen-data: wrote %zu images under %s\n", total, opt.out.string().c_str());
      return 0;
    }

    if (sub == pre) {
      pre_model.config.validate();
      const std::uint64_t seed = env_seed(opt.seed, pre_seed);
      std::vector<Image> corpus;
      for (const auto& cls : split(pre_classes, ',')) {
        const auto dir = pre_data / cls / "train" / "good";
        for (const auto& p : list_images(dir)) corpus.push_back(load_at(p, pre_model.config.image_size));
      }
      pre_cfg.optimizer = pre_optimizer == "sgd" ? OptimizerKind::sgd : OptimizerKind::adamw;
      pre_cfg.adamw.lr = pre_lr;
      pre_cfg.loss_support = pre_loss == "all" ? LossSupport::all_patches : LossSupport::masked_only;
      pre_cfg.sgd.lr = pre_lr;
      MaeModel<float> model(pre_model.config, seed);
      Rng rng = Rng::derive(seed, 1);
      const auto losses = pretrain(model, corpus, pre_cfg, rng);
      model.save(opt.out);
      write_text(fs::path(opt.out.string() + ".loss.csv"), loss_csv(losses));
      write_text(fs::path(opt.out.string() + ".manifest.txt"), manifest(*sub));
      std::printf("pretrain: %zu images, %zu steps, final loss %.6f -> %s\n", corpus.size(), losses.size(),
                  losses.empty() ? 0.0 : losses.back(), opt.out.string().c_str());
      return 0;
    }

    if (sub == fin) {
      require_file(fin_model);
      const std::uint64_t seed = env_seed(opt.seed, fin_seed);
      auto model = MaeModel<float>::load(fin_model);
      std::vector<Image> shots;
      for (const auto& p : list_images(fin_shots)) shots.push_back(load_at(p, model.config().image_size));
      const auto cfg = fin_flags.resolved();
      std::printf("finetune: iters=%zu lr=%g momentum=%g wd=%g batch=%zu rank=%zu crop=[%g,%g] rotation=%g mode=%s\n",
                  cfg.iterations, cfg.lr, cfg.momentum, cfg.weight_decay, cfg.batch_size, cfg.rank, cfg.crop_min,
                  cfg.crop_max, cfg.rotation_degrees, cfg.full_finetune ? "full" : "lora");
      Rng rng(seed);
      std::vector<double> losses;
      auto adapted = adapt(model, shots, cfg, rng, &losses);
      adapted.save(opt.out);
      write_text(fs::path(opt.out.string() + ".loss.csv"), loss_csv(losses));
      write_text(fs::path(opt.out.string() + ".manifest.txt"), manifest(*sub));
      std::printf("finetune: %zu shots, final loss %.6f -> %s\n", shots.size(), losses.empty() ? 0.0 : losses.back(),
                  opt.out.string().c_str());
      return 0;
    }

    if (sub == sco) {
      require_file(sco_model);
      const std::uint64_t seed = env_seed(opt.seed, sco_seed);
      const auto model = MaeModel<float>::load(sco_model);
      const auto paths = list_images(sco_images);
      sco_opt.kernel = kernel();
      sco_opt.jobs = opt.jobs;
      fs::create_directories(opt.out);
      std::ostringstream csv;
      csv << "path,score\n";
      for (std::size_t i = 0; i < paths.size(); ++i) {
        const Image img = load_at(paths[i], model.config().image_size);
        Rng rng = Rng::derive(seed, i);
        const auto result = score(model, img, sco_opt, rng);
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.8f", static_cast<double>(result.image_score));
        csv << paths[i].string() << ',' << buf << '\n';
        if (!sco_maps) continue;
        const std::string stem = paths[i].stem().string();
        Map scaled = result.pixel_map;
        const auto [lo, hi] = std::minmax_element(scaled.values().begin(), scaled.values().end());
        const float low = *lo, range = *hi - *lo;
        for (auto& v : scaled.values()) v = range > 0 ? (v - low) / range : 0.0f;
        write_image(opt.out / (stem + "_anom.png"), scaled);
        Checkpoint dump;
        dump.set("kind", "anomaly_map");
        dump.set("source", paths[i].string());
        dump.set("n_repetitions", std::to_string(result.n_repetitions));
        dump.add_tensor("map", result.pixel_map);
        dump.save(opt.out / (stem + "_map.bin"));
      }
      write_text(opt.out / "scores.csv", csv.str());
      write_text(opt.out / "manifest.txt", manifest(*sub));
      std::printf("score: %zu images, N=%zu -> %s\n", paths.size(), sco_opt.n_repetitions,
                  (opt.out / "scores.csv").string().c_str());
      return 0;
    }

    if (sub == ev) {
      require_file(ev_model);
      proto.seed_base = env_seed(opt.seed, ev_seed);
      proto.kernel = kernel();
      proto.jobs = opt.jobs;
      proto.finetune = ev_ft.resolved();
      proto.members.clear();
      for (const auto& m : split(ev_members, ',')) proto.members.push_back(parse_member(m));
      const auto model = MaeModel<float>::load(ev_model);
      const auto dataset = load_mvtec_dataset(ev_data, ev_class, model.config().image_size);
      const auto report = run_experiment(dataset, model, proto);
      write_text(opt.out / "report.csv", report_csv(report));
      write_text(opt.out / "report.txt", report_text(report));
      write_text(opt.out / "manifest.txt", manifest(*sub));
      std::cout << report_text(report);
      std::printf("eval: %s k=%zu image_auc=%.4f pixel_auc=%.4f -> %s\n", ev_class.c_str(), proto.k_shots,
                  report.image_auc_mean, report.pixel_auc_mean, (opt.out / "report.csv").string().c_str());
      return 0;
    }

    if (sub == sw) {
      require_file(sw_model);
      std::vector<std::size_t> ns;
      for (const auto& s : split(sw_list, ',')) {
        try {
          ns.push_back(std::stoul(s));
        } catch (const std::exception&) {
          throw UsageError("--n-list: not a count: " + s);
        }
      }
      sw_opt.kernel = kernel();
      sw_opt.jobs = opt.jobs;
      const auto model = MaeModel<float>::load(sw_model);
      const auto dataset = load_mvtec_dataset(sw_data, sw_class, model.config().image_size);
      const auto points = sweep_repetitions(dataset, model, ns, sw_opt);
      write_text(opt.out / "sweep.csv", sweep_csv(points));
      write_text(opt.out / "manifest.txt", manifest(*sub));
      std::cout << sweep_csv(points);
      std::printf("sweep-reps: %zu points -> %s\n", points.size(), (opt.out / "sweep.csv").string().c_str());
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
