#include "fmvp/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "fmvp/classifier.hpp"
#include "fmvp/csv.hpp"
#include "fmvp/errors.hpp"

namespace fmvp {

using nlohmann::json;

double psnr(const Tensor& a, const Tensor& b, double peak) {
  require_same_shape("psnr", a, b);
  double se = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.numel());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

namespace {

constexpr std::size_t kWin = 11;

std::array<double, kWin> gaussian_window() {
  std::array<double, kWin> w{};
  double total = 0.0;
  for (std::size_t i = 0; i < kWin; ++i) {
    const double d = static_cast<double>(i) - 5.0;
    w[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    total += w[i];
  }
  for (auto& v : w) v /= total;
  return w;
}

// Valid-mode separable filtering of an H x W plane.
std::vector<double> filter_valid(const std::vector<double>& p, std::size_t H, std::size_t W,
                                 const std::array<double, kWin>& w) {
  const std::size_t oh = H - kWin + 1, ow = W - kWin + 1;
  std::vector<double> rows(H * ow, 0.0), out(oh * ow, 0.0);
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::size_t k = 0; k < kWin; ++k) s += w[k] * p[y * W + x + k];
      rows[y * ow + x] = s;
    }
  }
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::size_t k = 0; k < kWin; ++k) s += w[k] * rows[(y + k) * ow + x];
      out[y * ow + x] = s;
    }
  }
  return out;
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b) {
  require_same_shape("ssim", a, b);
  if (a.rank() != 5) throw ShapeError("ssim: expected (B,C,T,H,W), got " + shape_str(a.shape()));
  const std::size_t H = a.dim(3), W = a.dim(4);
  if (H < kWin || W < kWin) throw ShapeError("ssim: frames must be at least 11x11");
  const std::size_t planes = a.numel() / (H * W);
  const auto w = gaussian_window();
  constexpr double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;

  double total = 0.0;
  std::vector<double> pa(H * W), pb(H * W), paa(H * W), pbb(H * W), pab(H * W);
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t i = 0; i < H * W; ++i) {
      pa[i] = a[p * H * W + i];
      pb[i] = b[p * H * W + i];
      paa[i] = pa[i] * pa[i];
      pbb[i] = pb[i] * pb[i];
      pab[i] = pa[i] * pb[i];
    }
    const auto ma = filter_valid(pa, H, W, w), mb = filter_valid(pb, H, W, w);
    const auto saa = filter_valid(paa, H, W, w), sbb = filter_valid(pbb, H, W, w), sab = filter_valid(pab, H, W, w);
    double plane = 0.0;
    for (std::size_t i = 0; i < ma.size(); ++i) {
      const double va = saa[i] - ma[i] * ma[i], vb = sbb[i] - mb[i] * mb[i], cov = sab[i] - ma[i] * mb[i];
      plane += ((2.0 * ma[i] * mb[i] + C1) * (2.0 * cov + C2)) /
               ((ma[i] * ma[i] + mb[i] * mb[i] + C1) * (va + vb + C2));
    }
    total += plane / static_cast<double>(ma.size());
  }
  return total / static_cast<double>(planes);
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& body) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto run = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t k = 0; k < std::min(workers, n); ++k) pool.emplace_back(run);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::string_view attack_name(AttackKind k) {
  switch (k) {
    case AttackKind::none: return "none";
    case AttackKind::pgd: return "pgd";
    case AttackKind::cw: return "cw";
    case AttackKind::adaptive: return "adaptive";
  }
  return "?";
}

AttackKind parse_attack(std::string_view s) {
  if (s == "none") return AttackKind::none;
  if (s == "pgd") return AttackKind::pgd;
  if (s == "cw") return AttackKind::cw;
  if (s == "adaptive") return AttackKind::adaptive;
  throw ContractError("unknown attack '" + std::string(s) + "' (expected none|pgd|cw|adaptive)");
}

AttackResult run_attack(AttackKind kind, const Tensor& x, int y, const DiffModel& model, const AttackSuite& suite,
                        const Purifier& purifier, SeededRng& rng) {
  switch (kind) {
    case AttackKind::none: {
      AttackResult r;
      r.x_adv = x;
      return r;
    }
    case AttackKind::pgd: return pgd_attack(x, y, model, suite.pgd);
    case AttackKind::cw: return cw_attack(x, y, model, suite.cw);
    case AttackKind::adaptive: return eot_adaptive_attack(x, y, model, purifier, suite.adaptive, rng);
  }
  throw ContractError("run_attack: bad attack kind");
}

SeededRng sample_stream(std::uint64_t seed, std::size_t sample_id, std::uint64_t purpose) {
  return SeededRng(seed).split(sample_id).split(purpose);
}

DefenseReport summarize(std::vector<SampleRow> rows, std::string attack, std::string purifier) {
  DefenseReport r;
  r.attack = std::move(attack);
  r.purifier = std::move(purifier);
  r.n_total = rows.size();
  std::size_t clean = 0, filtered = 0, attacked = 0, robust = 0, robust_all = 0, clean_pur = 0;
  double ssim_sum = 0.0, psnr_sum = 0.0;
  for (const auto& s : rows) {
    clean += s.clean_correct();
    robust_all += s.pred_purified == s.label;
    clean_pur += s.pred_clean_purified == s.label;
    if (!s.clean_correct()) continue;
    ++filtered;
    attacked += s.pred_attacked == s.label;
    robust += s.pred_purified == s.label;
    ssim_sum += s.ssim;
    psnr_sum += s.psnr;
  }
  if (filtered == 0) throw ContractError("evaluate: no sample is classified correctly before the attack");
  const auto n = static_cast<double>(rows.size()), f = static_cast<double>(filtered);
  r.n_filtered = filtered;
  r.clean_acc = static_cast<double>(clean) / n;
  r.attacked_acc = static_cast<double>(attacked) / f;
  r.robust_acc = static_cast<double>(robust) / f;
  r.robust_acc_unconditional = static_cast<double>(robust_all) / n;
  r.clean_acc_after_purify = static_cast<double>(clean_pur) / n;
  r.mean_ssim = ssim_sum / f;
  r.mean_psnr = psnr_sum / f;
  r.rows = std::move(rows);
  return r;
}

DefenseOutputs evaluate_defense(const Dataset& test, const ParamStore& classifier, AttackKind attack,
                                const AttackSuite& suite, const Purifier& purifier, const EvalConfig& cfg) {
  test.validate();
  const std::size_t n = test.size();
  const DiffModel model = classifier_model(classifier);
  std::vector<SampleRow> rows(n);
  std::vector<AttackResult> results(n);
  std::vector<Tensor> purified(n);

  parallel_for(n, cfg.workers, [&](std::size_t i) {
    const Tensor x = test.video(i);
    const int y = test.labels[i];
    SeededRng ra = sample_stream(cfg.seed, i, kStreamAttack);
    SeededRng rp = sample_stream(cfg.seed, i, kStreamPurifyAttacked);
    SeededRng rc = sample_stream(cfg.seed, i, kStreamPurifyClean);
    AttackResult ar = run_attack(attack, x, y, model, suite, purifier, ra);
    Tensor px = purifier.purify(ar.x_adv, rp);
    const Tensor pc = purifier.purify(x, rc);

    SampleRow& row = rows[i];
    row.sample_id = i;
    row.label = y;
    row.pred_clean = classify(classifier, x)[0];
    row.pred_attacked = classify(classifier, ar.x_adv)[0];
    row.pred_purified = classify(classifier, px)[0];
    row.pred_clean_purified = classify(classifier, pc)[0];
    row.attack_success = ar.success;
    row.linf = ar.linf;
    row.l2 = ar.l2;
    row.ssim = ssim(px, x);
    row.psnr = psnr(px, x);
    purified[i] = std::move(px);
    results[i] = std::move(ar);
  });

  DefenseOutputs out;
  std::vector<Tensor> adv;
  adv.reserve(n);
  for (const auto& r : results) adv.push_back(r.x_adv);
  out.adversarial = concat0(adv);
  out.purified = concat0(purified);
  out.attacks = std::move(results);
  out.report = summarize(std::move(rows), std::string(attack_name(attack)), purifier.name());
  return out;
}

void write_report_json(const std::filesystem::path& path, const DefenseReport& r) {
  json j = {{"attack", r.attack},
            {"purifier", r.purifier},
            {"n_total", r.n_total},
            {"n_filtered", r.n_filtered},
            {"clean_acc", r.clean_acc},
            {"attacked_acc", r.attacked_acc},
            {"robust_acc", r.robust_acc},
            {"robust_acc_unconditional", r.robust_acc_unconditional},
            {"clean_acc_after_purify", r.clean_acc_after_purify},
            {"mean_ssim", r.mean_ssim},
            {"mean_psnr", r.mean_psnr}};
  auto os = open_output(path);
  os << j.dump(2) << '\n';
}

void write_rows_csv(const std::filesystem::path& path, std::span<const SampleRow> rows) {
  auto os = open_output(path);
  os << "sample_id,label,pred_clean,pred_attacked,pred_purified,pred_clean_purified,attack_success,linf,l2,ssim,"
        "psnr\n";
  for (const auto& r : rows) {
    os << r.sample_id << ',' << r.label << ',' << r.pred_clean << ',' << r.pred_attacked << ',' << r.pred_purified
       << ',' << r.pred_clean_purified << ',' << (r.attack_success ? 1 : 0) << ',' << fmt_num(r.linf) << ','
       << fmt_num(r.l2) << ',' << fmt_num(r.ssim) << ',' << fmt_num(r.psnr) << '\n';
  }
}

std::vector<GridCell> grid_search(const Dataset& adversarial, const ParamStore& classifier, const ParamStore& vnet,
                                  std::span<const float> gammas, std::span<const std::size_t> steps,
                                  const PurifyConfig& base, const EvalConfig& cfg) {
  adversarial.validate();
  if (gammas.empty() || steps.empty()) throw ContractError("grid_search: empty axis");
  std::vector<GridCell> cells;
  for (float g : gammas) {
    for (std::size_t s : steps) {
      PurifyConfig pc = base;
      pc.gamma = g;
      pc.steps = s;
      const FlowPurifier purifier(vnet, pc);
      std::vector<int> correct(adversarial.size(), 0);
      parallel_for(adversarial.size(), cfg.workers, [&](std::size_t i) {
        SeededRng rng = sample_stream(cfg.seed, i, kStreamPurifyAttacked);
        correct[i] = classify(classifier, purifier.purify(adversarial.video(i), rng))[0] == adversarial.labels[i];
      });
      std::size_t hits = 0;
      for (int c : correct) hits += static_cast<std::size_t>(c);
      cells.push_back({g, s, static_cast<double>(hits) / static_cast<double>(adversarial.size())});
    }
  }
  return cells;
}

std::vector<double> gamma_profile(std::span<const GridCell> cells, std::span<const float> gammas) {
  std::vector<double> out;
  for (float g : gammas) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& c : cells) {
      if (c.gamma == g) {
        sum += c.robust_acc;
        ++n;
      }
    }
    if (n == 0) throw ContractError("gamma_profile: no cell for gamma " + fmt_num(g));
    out.push_back(sum / static_cast<double>(n));
  }
  return out;
}

void write_grid_csv(const std::filesystem::path& path, std::span<const GridCell> cells) {
  auto os = open_output(path);
  os << "gamma,steps,robust_acc\n";
  for (const auto& c : cells) os << fmt_num(c.gamma) << ',' << c.steps << ',' << fmt_num(c.robust_acc) << '\n';
}

PsdStudy psd_study(const Tensor& clean, const Tensor& attacked, const Tensor& purified, std::size_t bins) {
  if (clean.shape() != attacked.shape() || clean.shape() != purified.shape()) {
    throw ContractError("psd_study: sets are not aligned (" + shape_str(clean.shape()) + ", " +
                        shape_str(attacked.shape()) + ", " + shape_str(purified.shape()) + ")");
  }
  PsdStudy s;
  s.clean = psd_radial(clean, bins);
  s.attacked = psd_radial(attacked, bins);
  s.purified = psd_radial(purified, bins);
  s.l1_attacked = psd_log_l1(s.attacked, s.clean);
  s.l1_purified = psd_log_l1(s.purified, s.clean);
  return s;
}

void write_psd_study_csv(const std::filesystem::path& path, const PsdStudy& s) {
  auto os = open_output(path);
  os << "radius,clean,attacked,purified\n";
  for (std::size_t i = 0; i < s.clean.radius.size(); ++i) {
    os << fmt_num(s.clean.radius[i]) << ',' << fmt_num(s.clean.log10_power[i]) << ','
       << fmt_num(s.attacked.log10_power[i]) << ',' << fmt_num(s.purified.log10_power[i]) << '\n';
  }
}

DetectionStudy detection_study(const Tensor& clean, const Tensor& adversarial, const ParamStore& vnet,
                               std::size_t workers) {
  if (clean.rank() != 5 || adversarial.rank() != 5) throw ShapeError("detection_study: expected rank-5 sets");
  const NetworkField field(vnet);
  DetectionStudy d;
  d.clean_scores.resize(clean.dim(0));
  d.adv_scores.resize(adversarial.dim(0));
  parallel_for(clean.dim(0), workers,
               [&](std::size_t i) { d.clean_scores[i] = detection_score(clean.slice0(i, i + 1), field); });
  parallel_for(adversarial.dim(0), workers,
               [&](std::size_t i) { d.adv_scores[i] = detection_score(adversarial.slice0(i, i + 1), field); });
  d.auc = roc_auc(d.clean_scores, d.adv_scores);
  d.roc = roc_curve(d.clean_scores, d.adv_scores);
  return d;
}

std::vector<ScoredSample> detection_rows(const DetectionStudy& d) {
  std::vector<ScoredSample> rows;
  for (std::size_t i = 0; i < d.clean_scores.size(); ++i) rows.push_back({i, 0, d.clean_scores[i]});
  const std::size_t off = d.clean_scores.size();
  for (std::size_t i = 0; i < d.adv_scores.size(); ++i) rows.push_back({off + i, 1, d.adv_scores[i]});
  return rows;
}

}  // namespace fmvp
