#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fmvp/attacks.hpp"
#include "fmvp/dataset.hpp"
#include "fmvp/params.hpp"
#include "fmvp/purify.hpp"
#include "fmvp/spectral.hpp"

namespace fmvp {

// ---------------------------------------------------------------------------
// Quality metrics

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(peak^2 / MSE) over all elements, capped at 99 dB.
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);

/// Mean SSIM over every (b, c, t) frame: 11x11 Gaussian window (sigma 1.5)
/// over valid positions, C1 = 0.01^2, C2 = 0.03^2. Frames must be at least
/// 11x11.
double ssim(const Tensor& a, const Tensor& b);

// ---------------------------------------------------------------------------
// Parallel per-sample work

/// Calls body(i) once for every i in [0, n) on up to `workers` threads.
/// Results must be written by index; the first exception is rethrown.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& body);

// ---------------------------------------------------------------------------
// Defense evaluation

enum class AttackKind { none, pgd, cw, adaptive };
std::string_view attack_name(AttackKind k);
AttackKind parse_attack(std::string_view s);

struct AttackSuite {
  PgdConfig pgd;
  CwConfig cw;
  AdaptiveConfig adaptive;
};

/// Runs one attack on one sample. The adaptive attack goes through
/// `purifier`; the others only see the classifier.
AttackResult run_attack(AttackKind kind, const Tensor& x, int y, const DiffModel& model, const AttackSuite& suite,
                        const Purifier& purifier, SeededRng& rng);

struct EvalConfig {
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

/// Per-sample streams: attack, purify-attacked and purify-clean each get
/// their own child of SeededRng(seed).split(sample_id).
SeededRng sample_stream(std::uint64_t seed, std::size_t sample_id, std::uint64_t purpose);
inline constexpr std::uint64_t kStreamAttack = 1;
inline constexpr std::uint64_t kStreamPurifyAttacked = 2;
inline constexpr std::uint64_t kStreamPurifyClean = 3;

struct SampleRow {
  std::size_t sample_id = 0;
  int label = 0;
  int pred_clean = 0;
  int pred_attacked = 0;
  int pred_purified = 0;        // attacked, then purified
  int pred_clean_purified = 0;  // clean, then purified
  bool attack_success = false;
  double linf = 0.0, l2 = 0.0;
  double ssim = 0.0, psnr = 0.0;  // purified attacked vs clean

  bool clean_correct() const { return pred_clean == label; }
};

struct DefenseReport {
  std::string attack, purifier;
  std::size_t n_total = 0, n_filtered = 0;
  double clean_acc = 0.0;                 // raw classifier, all samples
  double attacked_acc = 0.0;              // no defense, clean-correct samples
  double robust_acc = 0.0;                // attacked then purified, clean-correct samples
  double robust_acc_unconditional = 0.0;  // attacked then purified, all samples
  double clean_acc_after_purify = 0.0;    // clean then purified, all samples
  double mean_ssim = 0.0, mean_psnr = 0.0;  // over clean-correct samples
  std::vector<SampleRow> rows;
};

/// Recompute every aggregate from the rows. Throws ContractError when no
/// sample is classified correctly before the attack.
DefenseReport summarize(std::vector<SampleRow> rows, std::string attack, std::string purifier);

struct DefenseOutputs {
  DefenseReport report;
  Tensor adversarial;  // (N, C, T, H, W), aligned with the input set
  Tensor purified;     // purified adversarial inputs
  std::vector<AttackResult> attacks;
};

/// Attack every sample, purify the attacked and the clean input, and
/// re-classify. Robust accuracy is conditioned on clean-correct samples.
DefenseOutputs evaluate_defense(const Dataset& test, const ParamStore& classifier, AttackKind attack,
                                const AttackSuite& suite, const Purifier& purifier, const EvalConfig& cfg);

void write_report_json(const std::filesystem::path& path, const DefenseReport& r);
void write_rows_csv(const std::filesystem::path& path, std::span<const SampleRow> rows);

// ---------------------------------------------------------------------------
// Grid search over keep ratio and Euler steps

struct GridCell {
  float gamma;
  std::size_t steps;
  double robust_acc;
};

/// Purify the given adversarial set for every (gamma, steps) pair and score
/// the classifier against `adversarial.labels`. Sample i always uses the
/// same stream, so cells differ only in the swept settings.
std::vector<GridCell> grid_search(const Dataset& adversarial, const ParamStore& classifier, const ParamStore& vnet,
                                  std::span<const float> gammas, std::span<const std::size_t> steps,
                                  const PurifyConfig& base, const EvalConfig& cfg);

/// Mean robust accuracy per gamma over all step counts, in `gammas` order.
std::vector<double> gamma_profile(std::span<const GridCell> cells, std::span<const float> gammas);

void write_grid_csv(const std::filesystem::path& path, std::span<const GridCell> cells);

// ---------------------------------------------------------------------------
// Spectral and detection studies

struct PsdStudy {
  PsdCurve clean, attacked, purified;
  double l1_attacked = 0.0;  // log-power L1 to the clean curve
  double l1_purified = 0.0;
};

inline constexpr std::size_t kDefaultPsdBins = 16;

/// Radial PSD of three aligned sets. Throws ContractError on misalignment.
PsdStudy psd_study(const Tensor& clean, const Tensor& attacked, const Tensor& purified,
                   std::size_t bins = kDefaultPsdBins);

/// CSV with columns radius,clean,attacked,purified (log10 power).
void write_psd_study_csv(const std::filesystem::path& path, const PsdStudy& s);

struct DetectionStudy {
  std::vector<double> clean_scores, adv_scores;
  double auc = 0.0;
  std::vector<RocPoint> roc;
};

DetectionStudy detection_study(const Tensor& clean, const Tensor& adversarial, const ParamStore& vnet,
                               std::size_t workers = 1);

/// Rows 0..n-1 are clean (label 0), n..2n-1 adversarial (label 1).
std::vector<ScoredSample> detection_rows(const DetectionStudy& d);

}  // namespace fmvp
