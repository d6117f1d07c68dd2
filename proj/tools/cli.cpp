#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fmvp/csv.hpp"
#include "fmvp/errors.hpp"
#include "fmvp/eval.hpp"
#include "fmvp/grad_suite.hpp"
#include "run_config.hpp"

#ifndef FMVP_VERSION
#define FMVP_VERSION "0.0.0"
#endif

namespace fmvp::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Options shared by every subcommand. Dedicated flags are applied on top of
// the config file and --set assignments.
struct Common {
  std::string name;
  std::uint64_t seed = 0;
  std::string out = ".";
  std::string config_path;
  std::vector<std::string> sets;
  bool dump_config = false;
  json flag_patch = json::object();
  json inputs = json::object();
};

struct Context {
  Common common;
  RunConfig cfg;
  fs::path out;
};

json read_json_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw FormatError("cannot open config '" + p.string() + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  json j = json::parse(ss.str(), nullptr, false);
  if (j.is_discarded()) throw FormatError("config '" + p.string() + "' is not valid JSON");
  return j;
}

void write_json(const fs::path& p, const json& j) {
  auto os = open_output(p);
  os << j.dump(2) << '\n';
}

RunConfig resolve(const Common& c) {
  json doc = c.config_path.empty() ? json::object() : read_json_file(c.config_path);
  for (const auto& s : c.sets) apply_override(doc, s);
  reject_unknown_keys(doc, to_json(RunConfig{}));
  doc.merge_patch(c.flag_patch);
  return from_json(doc);
}

json resolved_document(const Context& ctx, bool with_seed) {
  json j = {{"tool", "fmvp"},
            {"version", FMVP_VERSION},
            {"command", ctx.common.name},
            {"inputs", ctx.common.inputs},
            {"config", to_json(ctx.cfg)}};
  j["seed"] = with_seed ? json(ctx.common.seed) : json(nullptr);
  return j;
}

// Attach the options every subcommand understands.
void add_common(CLI::App* sub, Common& c, bool needs_seed) {
  c.name = sub->get_name();
  if (needs_seed) {
    sub->add_option("--seed", c.seed, "Root seed for every random stream")->required()->default_str("");
  }
  sub->add_option("--out", c.out, "Output directory (created if missing)")->capture_default_str();
  sub->add_option("--config", c.config_path, "RunConfig JSON; unknown keys are rejected");
  sub->add_option("--set", c.sets, "Override one config key: section.key=JSON (repeatable)")->default_str("");
  sub->add_flag("--dump-config", c.dump_config, "Print the effective config and exit");
  sub->footer(
      "Config sections: data, classifier, attack.{pgd,cw,adaptive}, purifier, train, eval.\n"
      "Precedence: defaults < --config < --set < dedicated flags. --dump-config lists every key.");
}

// Record a flag value into the config patch after parsing.
template <class T>
std::function<void()> patch_if_set(CLI::Option* opt, Common& c, std::vector<std::string> path, const T& value) {
  return [opt, &c, path, &value] {
    if (opt->count() == 0) return;
    json* node = &c.flag_patch;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) node = &(*node)[path[i]];
    (*node)[path.back()] = value;
  };
}

Dataset pick_split(const Dataset& all, const std::string& split, std::size_t limit) {
  Dataset d;
  if (split == "all") {
    d = all;
  } else {
    CorpusSplits s = split_corpus(all);
    if (split == "train") d = std::move(s.train);
    else if (split == "val") d = std::move(s.val);
    else if (split == "test") d = std::move(s.test);
    else throw ContractError("--split: expected train, val, test or all, got '" + split + "'");
  }
  if (limit > 0 && limit < d.size()) d = d.slice(0, limit);
  return d;
}

void require_prefix(const ParamStore& p, const std::string& prefix, const std::string& path) {
  if (p.empty()) throw ContractError("checkpoint '" + path + "' is empty");
  for (const auto& [name, value] : p) {
    if (name.rfind(prefix, 0) != 0) {
      throw ContractError("checkpoint '" + path + "' holds '" + name + "', expected '" + prefix + "*' parameters");
    }
  }
}

ParamStore load_classifier(const std::string& path) {
  ParamStore p = load_checkpoint(path);
  require_prefix(p, "clf.", path);
  return p;
}

ParamStore load_vnet(const std::string& path) {
  ParamStore p = load_checkpoint(path);
  require_prefix(p, vnet::kPrefix, path);
  return p;
}

std::unique_ptr<Purifier> make_purifier(const std::string& spec, const PurifyConfig& pc) {
  if (spec == "identity") return std::make_unique<IdentityPurifier>();
  return std::make_unique<FlowPurifier>(load_vnet(spec), pc);
}

void write_attacks_json(const fs::path& p, AttackKind kind, std::span<const AttackResult> results) {
  std::vector<AttackRecord> recs;
  for (const auto& r : results) recs.push_back({std::string(attack_name(kind)), r.success, r.linf, r.l2, r.iters_used});
  write_attack_sidecar(p, recs);
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_gen_data(Context& ctx) {
  ctx.cfg.data.seed = ctx.common.seed;
  const Dataset all = gen_corpus(ctx.cfg.data);
  save_dataset(ctx.out / "dataset.bin", all);
  std::cout << "wrote " << all.size() << " records to " << (ctx.out / "dataset.bin").string() << '\n';
  return kExitOk;
}

struct DataArgs {
  std::string data;
  std::string split;
};

int cmd_train_classifier(Context& ctx, const DataArgs& a) {
  const CorpusSplits s = split_corpus(load_dataset(a.data));
  ClassifierTrainConfig cc = ctx.cfg.classifier;
  cc.seed = ctx.common.seed;
  ClassifierTrainResult r = train_classifier(s.train, s.val, cc);
  save_checkpoint(ctx.out / "classifier.ckpt", r.params);
  {
    auto os = open_output(ctx.out / "train_log.csv");
    os << "epoch,loss\n";
    for (std::size_t e = 0; e < r.epoch_loss.size(); ++e) os << e + 1 << ',' << fmt_num(r.epoch_loss[e]) << '\n';
  }
  const double test_acc = accuracy(r.params, s.test);
  write_json(ctx.out / "metrics.json", {{"train_acc", r.train_acc},
                                        {"val_acc", r.val_acc},
                                        {"test_acc", test_acc},
                                        {"epoch_loss", r.epoch_loss},
                                        {"diverged", r.diverged},
                                        {"diagnostic", r.diagnostic}});
  std::cout << "train_acc " << r.train_acc << " val_acc " << r.val_acc << " test_acc " << test_acc << '\n';
  if (r.diverged) {
    std::cerr << "error: " << r.diagnostic << '\n';
    return kExitContract;
  }
  return kExitOk;
}

struct AttackArgs {
  DataArgs d;
  std::string classifier;
  std::string attack = "pgd";
  std::string purifier = "identity";
};

int cmd_attack(Context& ctx, const AttackArgs& a) {
  const AttackKind kind = parse_attack(a.attack);
  if (kind == AttackKind::none) throw ContractError("attack: --attack must be pgd, cw or adaptive");
  const Dataset set = pick_split(load_dataset(a.d.data), a.d.split, ctx.cfg.eval.limit);
  const ParamStore clf = load_classifier(a.classifier);
  const auto purifier = make_purifier(a.purifier, ctx.cfg.purifier);
  const DiffModel model = classifier_model(clf);
  const AttackSuite suite{ctx.cfg.pgd, ctx.cfg.cw, ctx.cfg.adaptive};

  std::vector<AttackResult> results(set.size());
  parallel_for(set.size(), ctx.cfg.eval.workers, [&](std::size_t i) {
    SeededRng rng = sample_stream(ctx.common.seed, i, kStreamAttack);
    results[i] = run_attack(kind, set.video(i), set.labels[i], model, suite, *purifier, rng);
  });
  std::vector<Tensor> adv;
  std::size_t wins = 0;
  for (const auto& r : results) {
    adv.push_back(r.x_adv);
    wins += r.success ? 1 : 0;
  }
  save_dataset(ctx.out / "adversarial.bin", Dataset{concat0(adv), set.labels, set.num_classes});
  write_attacks_json(ctx.out / "attacks.json", kind, results);
  std::cout << a.attack << " success " << wins << '/' << set.size() << '\n';
  return kExitOk;
}

struct TrainPurifierArgs {
  std::string data;
  std::string adv;
};

int cmd_train_purifier(Context& ctx, const TrainPurifierArgs& a) {
  const TrainVariant variant = parse_variant(ctx.cfg.train.variant);
  // Decided before any file is opened: the generalist never sees attack output.
  if (variant == TrainVariant::gaussian_generalist && !a.adv.empty()) {
    throw ContractError("train-purifier: --variant gaussian must not be given --adv");
  }
  if (variant != TrainVariant::gaussian_generalist && a.adv.empty()) {
    throw ContractError("train-purifier: --variant " + ctx.cfg.train.variant + " needs --adv (attack --split train)");
  }
  const Dataset train = split_corpus(load_dataset(a.data)).train;
  std::optional<Tensor> adv;
  if (!a.adv.empty()) {
    Dataset ad = load_dataset(a.adv);
    if (ad.size() != train.size() || ad.labels != train.labels) {
      throw ContractError("train-purifier: --adv is not aligned with the train split of --data");
    }
    adv = std::move(ad.videos);
  }
  PurifierTrainConfig tc = ctx.cfg.train.cfg;
  tc.seed = ctx.common.seed;

  auto log = open_output(ctx.out / "loss.csv");
  write_loss_header(log);
  PurifierTrainResult r = train_purifier(train.videos, adv, adv.has_value(), variant, tc, [&](const LossRecord& rec) {
    write_loss_row(log, rec);
    if (!rec.applied) std::cerr << "step " << rec.step << ": " << rec.diagnostic << '\n';
  });
  log.close();
  save_checkpoint(ctx.out / "vnet.ckpt", r.params);

  const std::size_t tail = std::min<std::size_t>(100, r.log.size());
  double tail_mean = 0.0;
  for (std::size_t i = r.log.size() - tail; i < r.log.size(); ++i) tail_mean += r.log[i].total;
  if (tail > 0) tail_mean /= static_cast<double>(tail);
  write_json(ctx.out / "metrics.json", {{"variant", variant_name(variant)},
                                        {"steps", r.log.size()},
                                        {"skipped_steps", r.skipped},
                                        {"parameter_count", r.params.parameter_count()},
                                        {"loss_total_last100_mean", tail_mean}});
  std::cout << "trained " << variant_name(variant) << " for " << r.log.size() << " steps, last-100 mean loss "
            << tail_mean << '\n';
  return kExitOk;
}

struct PurifyArgs {
  DataArgs d;
  std::string purifier;
};

int cmd_purify(Context& ctx, const PurifyArgs& a) {
  const Dataset set = pick_split(load_dataset(a.d.data), a.d.split, ctx.cfg.eval.limit);
  const auto purifier = make_purifier(a.purifier, ctx.cfg.purifier);
  std::vector<Tensor> out(set.size());
  parallel_for(set.size(), ctx.cfg.eval.workers, [&](std::size_t i) {
    SeededRng rng = sample_stream(ctx.common.seed, i, kStreamPurifyAttacked);
    out[i] = purifier->purify(set.video(i), rng);
  });
  save_dataset(ctx.out / "purified.bin", Dataset{concat0(out), set.labels, set.num_classes});
  std::cout << "purified " << set.size() << " records\n";
  return kExitOk;
}

struct DetectArgs {
  DataArgs d;
  std::string adv;
  std::string purifier;
};

int cmd_detect(Context& ctx, const DetectArgs& a) {
  const Dataset clean = pick_split(load_dataset(a.d.data), a.d.split, ctx.cfg.eval.limit);
  const Dataset adv = load_dataset(a.adv);
  if (adv.videos.shape() != clean.videos.shape()) {
    throw ContractError("detect: --adv has shape " + shape_str(adv.videos.shape()) + ", clean selection has " +
                        shape_str(clean.videos.shape()));
  }
  const ParamStore vnet = load_vnet(a.purifier);
  const DetectionStudy d = detection_study(clean.videos, adv.videos, vnet, ctx.cfg.eval.workers);
  write_scores_csv(ctx.out / "scores.csv", detection_rows(d));
  write_roc_csv(ctx.out / "roc.csv", d.roc);
  write_json(ctx.out / "detection.json", {{"auc", d.auc},
                                          {"auc_trapezoid", trapezoid_area(d.roc)},
                                          {"n_clean", d.clean_scores.size()},
                                          {"n_adv", d.adv_scores.size()}});
  std::cout << "auc " << d.auc << '\n';
  return kExitOk;
}

int cmd_evaluate(Context& ctx, const AttackArgs& a) {
  const AttackKind kind = parse_attack(a.attack);
  const Dataset set = pick_split(load_dataset(a.d.data), a.d.split, ctx.cfg.eval.limit);
  const ParamStore clf = load_classifier(a.classifier);
  const auto purifier = make_purifier(a.purifier, ctx.cfg.purifier);
  const AttackSuite suite{ctx.cfg.pgd, ctx.cfg.cw, ctx.cfg.adaptive};
  DefenseOutputs o = evaluate_defense(set, clf, kind, suite, *purifier, EvalConfig{ctx.common.seed, ctx.cfg.eval.workers});
  write_report_json(ctx.out / "report.json", o.report);
  write_rows_csv(ctx.out / "rows.csv", o.report.rows);
  save_dataset(ctx.out / "adversarial.bin", Dataset{o.adversarial, set.labels, set.num_classes});
  save_dataset(ctx.out / "purified.bin", Dataset{o.purified, set.labels, set.num_classes});
  write_attacks_json(ctx.out / "attacks.json", kind, o.attacks);
  const auto& r = o.report;
  std::cout << "clean " << r.clean_acc << " attacked " << r.attacked_acc << " robust " << r.robust_acc
            << " clean_after_purify " << r.clean_acc_after_purify << " ssim " << r.mean_ssim << " psnr "
            << r.mean_psnr << '\n';
  return kExitOk;
}

struct GridArgs {
  DataArgs d;
  std::string classifier;
  std::string purifier;
  std::string adv;
};

int cmd_grid_search(Context& ctx, const GridArgs& a) {
  const Dataset set = pick_split(load_dataset(a.d.data), a.d.split, ctx.cfg.eval.limit);
  const ParamStore clf = load_classifier(a.classifier);
  const ParamStore vnet = load_vnet(a.purifier);
  Tensor adv;
  if (!a.adv.empty()) {
    Dataset ad = load_dataset(a.adv);
    if (ad.size() != set.size() || ad.labels != set.labels) {
      throw ContractError("grid-search: --adv is not aligned with the selected split");
    }
    adv = std::move(ad.videos);
  } else {
    const DiffModel model = classifier_model(clf);
    std::vector<Tensor> parts(set.size());
    parallel_for(set.size(), ctx.cfg.eval.workers,
                 [&](std::size_t i) { parts[i] = pgd_attack(set.video(i), set.labels[i], model, ctx.cfg.pgd).x_adv; });
    adv = concat0(parts);
  }
  // Robust accuracy is scored on samples the classifier gets right when clean.
  const std::vector<int> pred = classify(clf, set.videos);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (pred[i] == set.labels[i]) keep.push_back(i);
  }
  if (keep.empty()) throw ContractError("grid-search: no clean-correct samples");
  const Dataset filtered = Dataset{adv, set.labels, set.num_classes}.select(keep);
  const auto cells = grid_search(filtered, clf, vnet, ctx.cfg.eval.gammas, ctx.cfg.eval.grid_steps, ctx.cfg.purifier,
                                 EvalConfig{ctx.common.seed, ctx.cfg.eval.workers});
  const auto profile = gamma_profile(cells, ctx.cfg.eval.gammas);
  std::size_t best = 0;
  for (std::size_t i = 1; i < profile.size(); ++i) {
    if (profile[i] > profile[best]) best = i;
  }
  write_grid_csv(ctx.out / "grid.csv", cells);
  json jc = json::array();
  for (const auto& c : cells) jc.push_back({{"gamma", c.gamma}, {"steps", c.steps}, {"robust_acc", c.robust_acc}});
  write_json(ctx.out / "grid.json", {{"n_samples", filtered.size()},
                                     {"cells", jc},
                                     {"gammas", ctx.cfg.eval.gammas},
                                     {"gamma_profile", profile},
                                     {"best_gamma", ctx.cfg.eval.gammas[best]}});
  std::cout << "best gamma " << ctx.cfg.eval.gammas[best] << " (mean robust " << profile[best] << " over "
            << ctx.cfg.eval.grid_steps.size() << " step counts)\n";
  return kExitOk;
}

struct PsdArgs {
  DataArgs d;
  std::string adv;
  std::string purified;
};

int cmd_psd(Context& ctx, const PsdArgs& a) {
  const Dataset clean = pick_split(load_dataset(a.d.data), a.d.split, ctx.cfg.eval.limit);
  const Dataset adv = load_dataset(a.adv);
  const Dataset pur = load_dataset(a.purified);
  const PsdStudy s = psd_study(clean.videos, adv.videos, pur.videos, ctx.cfg.eval.psd_bins);
  write_psd_study_csv(ctx.out / "psd.csv", s);
  write_json(ctx.out / "psd.json", {{"bins", ctx.cfg.eval.psd_bins},
                                    {"l1_attacked", s.l1_attacked},
                                    {"l1_purified", s.l1_purified}});
  std::cout << "log-PSD L1 to clean: attacked " << s.l1_attacked << " purified " << s.l1_purified << '\n';
  return kExitOk;
}

int cmd_grad_check(Context& ctx) {
  const auto results = run_grad_suite(ctx.common.seed);
  json cases = json::array();
  bool ok = true;
  for (const auto& r : results) {
    json leaves = json::array();
    for (const auto& l : r.report.leaves) {
      leaves.push_back({{"name", l.name},
                        {"max_rel_error", l.max_rel_error},
                        {"max_abs_error", l.max_abs_error},
                        {"worst_index", l.worst_index},
                        {"passed", l.passed}});
    }
    ok = ok && r.report.passed();
    cases.push_back({{"name", r.name}, {"passed", r.report.passed()}, {"leaves", leaves}});
    std::cout << (r.report.passed() ? "ok   " : "FAIL ") << r.name << '\n';
  }
  write_json(ctx.out / "grad_check.json", {{"passed", ok}, {"cases", cases}});
  return ok ? kExitOk : kExitContract;
}

int dispatch(int argc, const char* const* argv) {
  CLI::App app{"Flow-matching video purification pipeline", "fmvp"};
  app.set_version_flag("--version", FMVP_VERSION);
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  std::vector<std::function<void()>> patches;
  std::function<int(Context&)> run_selected;
  Common common;

  auto make = [&](const char* name, const char* help) { return app.add_subcommand(name, help); };
  auto split_opt = [&](CLI::App* sub, DataArgs& d, const char* def) {
    d.split = def;
    sub->add_option("--split", d.split, "Records to use: train, val, test or all")->capture_default_str();
  };
  std::size_t workers_flag = 1, limit_flag = 0;
  auto common_flags = [&](CLI::App* sub, bool needs_seed, bool workers, bool limit) {
    add_common(sub, common, needs_seed);
    if (workers) {
      std::size_t& w = workers_flag;
      auto* o = sub->add_option("--workers", w, "Worker threads (results do not depend on it)")->capture_default_str();
      patches.push_back(patch_if_set(o, common, {"eval", "workers"}, w));
    }
    if (limit) {
      std::size_t& l = limit_flag;
      auto* o = sub->add_option("--limit", l, "Use the first N records of the selection (0 = all)")->capture_default_str();
      patches.push_back(patch_if_set(o, common, {"eval", "limit"}, l));
    }
  };
  float gamma = PurifyConfig{}.gamma;
  std::size_t psteps = PurifyConfig{}.steps;
  auto purify_flags = [&](CLI::App* sub) {
    auto* g = sub->add_option("--gamma", gamma, "Inference keep ratio")->capture_default_str();
    auto* s = sub->add_option("--steps", psteps, "Euler steps at inference")->capture_default_str();
    patches.push_back(patch_if_set(g, common, {"purifier", "gamma"}, gamma));
    patches.push_back(patch_if_set(s, common, {"purifier", "steps"}, psteps));
  };

  // gen-data
  std::size_t per_class = CorpusSpec{}.per_class;
  {
    auto* sub = make("gen-data", "Generate the synthetic moving-square corpus");
    common_flags(sub, true, false, false);
    auto* o = sub->add_option("--per-class", per_class, "Records per motion class")->capture_default_str();
    patches.push_back(patch_if_set(o, common, {"data", "per_class"}, per_class));
    sub->callback([&] { run_selected = [&](Context& c) { return cmd_gen_data(c); }; });
  }
  // train-classifier
  DataArgs tc_args;
  {
    auto* sub = make("train-classifier", "Train the victim classifier on the train split");
    common_flags(sub, true, false, false);
    sub->add_option("--data", tc_args.data, "Dataset file from gen-data")->required();
    sub->callback([&] {
      common.inputs = {{"data", tc_args.data}};
      run_selected = [&](Context& c) { return cmd_train_classifier(c, tc_args); };
    });
  }
  // attack
  AttackArgs at_args;
  {
    auto* sub = make("attack", "Attack every record of a split");
    common_flags(sub, true, true, true);
    sub->add_option("--data", at_args.d.data, "Dataset file")->required();
    split_opt(sub, at_args.d, "test");
    sub->add_option("--classifier", at_args.classifier, "Classifier checkpoint")->required();
    sub->add_option("--attack", at_args.attack, "pgd, cw or adaptive")->capture_default_str();
    sub->add_option("--purifier", at_args.purifier, "Velocity checkpoint attacked by 'adaptive', or identity")
        ->capture_default_str();
    purify_flags(sub);
    sub->callback([&] {
      common.inputs = {{"data", at_args.d.data}, {"split", at_args.d.split}, {"classifier", at_args.classifier},
                       {"attack", at_args.attack}, {"purifier", at_args.purifier}};
      run_selected = [&](Context& c) { return cmd_attack(c, at_args); };
    });
  }
  // train-purifier
  TrainPurifierArgs tp_args;
  std::string variant = "gaussian";
  std::size_t train_steps = PurifierTrainConfig{}.steps;
  std::size_t batch = PurifierTrainConfig{}.batch_size;
  {
    auto* sub = make("train-purifier", "Train the velocity network");
    common_flags(sub, true, false, false);
    sub->add_option("--data", tp_args.data, "Dataset file; the train split is used")->required();
    sub->add_option("--adv", tp_args.adv, "Adversarial train split (attack --split train); pgd/cw variants only");
    auto* v = sub->add_option("--variant", variant, "pgd, cw or gaussian")->capture_default_str();
    auto* s = sub->add_option("--train-steps", train_steps, "Optimizer steps")->capture_default_str();
    auto* b = sub->add_option("--batch-size", batch, "Samples per step")->capture_default_str();
    patches.push_back(patch_if_set(v, common, {"train", "variant"}, variant));
    patches.push_back(patch_if_set(s, common, {"train", "steps"}, train_steps));
    patches.push_back(patch_if_set(b, common, {"train", "batch_size"}, batch));
    sub->callback([&] {
      common.inputs = {{"data", tp_args.data}, {"adv", tp_args.adv}};
      run_selected = [&](Context& c) { return cmd_train_purifier(c, tp_args); };
    });
  }
  // purify
  PurifyArgs pu_args;
  {
    auto* sub = make("purify", "Purify every record of a dataset file");
    common_flags(sub, true, true, true);
    sub->add_option("--data", pu_args.d.data, "Dataset file (e.g. adversarial.bin)")->required();
    split_opt(sub, pu_args.d, "all");
    sub->add_option("--purifier", pu_args.purifier, "Velocity checkpoint or identity")->required();
    purify_flags(sub);
    sub->callback([&] {
      common.inputs = {{"data", pu_args.d.data}, {"split", pu_args.d.split}, {"purifier", pu_args.purifier}};
      run_selected = [&](Context& c) { return cmd_purify(c, pu_args); };
    });
  }
  // detect
  DetectArgs de_args;
  {
    auto* sub = make("detect", "Velocity-norm detection scores, ROC and AUC");
    common_flags(sub, false, true, true);
    sub->add_option("--data", de_args.d.data, "Clean dataset file")->required();
    split_opt(sub, de_args.d, "test");
    sub->add_option("--adv", de_args.adv, "Adversarial file aligned with the clean selection")->required();
    sub->add_option("--purifier", de_args.purifier, "Velocity checkpoint")->required();
    sub->callback([&] {
      common.inputs = {{"data", de_args.d.data}, {"split", de_args.d.split}, {"adv", de_args.adv},
                       {"purifier", de_args.purifier}};
      run_selected = [&](Context& c) { return cmd_detect(c, de_args); };
    });
  }
  // evaluate
  AttackArgs ev_args;
  {
    auto* sub = make("evaluate", "Attack, purify and re-classify a split");
    common_flags(sub, true, true, true);
    sub->add_option("--data", ev_args.d.data, "Dataset file")->required();
    split_opt(sub, ev_args.d, "test");
    sub->add_option("--classifier", ev_args.classifier, "Classifier checkpoint")->required();
    sub->add_option("--attack", ev_args.attack, "none, pgd, cw or adaptive")->capture_default_str();
    sub->add_option("--purifier", ev_args.purifier, "Velocity checkpoint or identity")->required();
    purify_flags(sub);
    sub->callback([&] {
      common.inputs = {{"data", ev_args.d.data}, {"split", ev_args.d.split}, {"classifier", ev_args.classifier},
                       {"attack", ev_args.attack}, {"purifier", ev_args.purifier}};
      run_selected = [&](Context& c) { return cmd_evaluate(c, ev_args); };
    });
  }
  // grid-search
  GridArgs gr_args;
  {
    auto* sub = make("grid-search", "Robust accuracy over eval.gammas x eval.grid_steps");
    common_flags(sub, true, true, true);
    sub->add_option("--data", gr_args.d.data, "Dataset file")->required();
    split_opt(sub, gr_args.d, "test");
    sub->add_option("--classifier", gr_args.classifier, "Classifier checkpoint")->required();
    sub->add_option("--purifier", gr_args.purifier, "Velocity checkpoint")->required();
    sub->add_option("--adv", gr_args.adv, "Adversarial file aligned with the selection (default: run PGD)");
    sub->callback([&] {
      common.inputs = {{"data", gr_args.d.data}, {"split", gr_args.d.split}, {"classifier", gr_args.classifier},
                       {"purifier", gr_args.purifier}, {"adv", gr_args.adv}};
      run_selected = [&](Context& c) { return cmd_grid_search(c, gr_args); };
    });
  }
  // psd
  PsdArgs ps_args;
  {
    auto* sub = make("psd", "Radial PSD of clean, attacked and purified sets");
    common_flags(sub, false, false, true);
    sub->add_option("--data", ps_args.d.data, "Clean dataset file")->required();
    split_opt(sub, ps_args.d, "test");
    sub->add_option("--adv", ps_args.adv, "Attacked set")->required();
    sub->add_option("--purified", ps_args.purified, "Purified set")->required();
    sub->callback([&] {
      common.inputs = {{"data", ps_args.d.data}, {"split", ps_args.d.split}, {"adv", ps_args.adv},
                       {"purified", ps_args.purified}};
      run_selected = [&](Context& c) { return cmd_psd(c, ps_args); };
    });
  }
  // grad-check
  {
    auto* sub = make("grad-check", "Finite-difference check of every differentiable op");
    common_flags(sub, true, false, false);
    sub->callback([&] { run_selected = [&](Context& c) { return cmd_grad_check(c); }; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitContract;
  }
  for (auto& p : patches) p();

  const std::string cmd = app.get_subcommands().front()->get_name();
  common.name = cmd;
  const bool seeded = cmd != "detect" && cmd != "psd";

  Context ctx;
  ctx.common = common;
  ctx.cfg = resolve(common);
  ctx.out = common.out;
  if (common.dump_config) {
    std::cout << to_json(ctx.cfg).dump(2) << '\n';
    return kExitOk;
  }
  fs::create_directories(ctx.out);
  write_json(ctx.out / "config.resolved.json", resolved_document(ctx, seeded));
  return run_selected(ctx);
}

}  // namespace

int run(int argc, const char* const* argv) {
  try {
    return dispatch(argc, argv);
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitContract;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFormat;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFormat;
  }
}

}  // namespace fmvp::cli
