#include "run_config.hpp"

#include <charconv>
#include <cstdlib>

#include "fmvp/errors.hpp"

namespace fmvp::cli {

using nlohmann::json;

namespace {

std::string residual_name(FglResidual r) {
  return r == FglResidual::complex_difference ? "complex_difference" : "magnitude_difference";
}

FglResidual parse_residual(const std::string& s) {
  if (s == "complex_difference") return FglResidual::complex_difference;
  if (s == "magnitude_difference") return FglResidual::magnitude_difference;
  throw ContractError("train.fgl_residual: expected complex_difference or magnitude_difference, got '" + s + "'");
}

template <class T>
void get(const json& j, const char* key, T& out, const std::string& section) {
  try {
    j.at(key).get_to(out);
  } catch (const json::exception& e) {
    throw ContractError("config " + section + "." + key + ": " + e.what());
  }
}

// Float fields are stored widened; print them in their shortest float form.
void shorten_floats(json& j) {
  if (j.is_structured()) {
    for (auto& e : j) shorten_floats(e);
    return;
  }
  if (!j.is_number_float()) return;
  const double d = j.get<double>();
  const float f = static_cast<float>(d);
  if (static_cast<double>(f) != d) return;
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, f);
  *res.ptr = '\0';
  j = std::strtod(buf, nullptr);
}

}  // namespace

json to_json(const RunConfig& c) {
  json j;
  j["data"] = {{"per_class", c.data.per_class},   {"frames", c.data.frames},
               {"height", c.data.height},         {"width", c.data.width},
               {"square", c.data.square},         {"speed", c.data.speed},
               {"foreground", c.data.foreground}, {"background", c.data.background},
               {"texture", c.data.texture}};
  j["classifier"] = {{"epochs", c.classifier.epochs},
                     {"batch_size", c.classifier.batch_size},
                     {"lr", c.classifier.lr},
                     {"weight_decay", c.classifier.weight_decay}};
  j["attack"]["pgd"] = {{"epsilon", c.pgd.epsilon}, {"eta", c.pgd.eta}, {"iters", c.pgd.iters}};
  j["attack"]["cw"] = {{"c_init", c.cw.c_init}, {"search_steps", c.cw.search_steps}, {"lr", c.cw.lr},
                       {"kappa", c.cw.kappa},   {"iters", c.cw.iters}};
  j["attack"]["adaptive"] = {{"epsilon", c.adaptive.epsilon},
                             {"alpha", c.adaptive.alpha},
                             {"iters", c.adaptive.iters},
                             {"eot_samples", c.adaptive.eot_samples},
                             {"restarts", c.adaptive.restarts},
                             {"purify_steps_grad", c.adaptive.purify_steps_grad},
                             {"purify_steps_eval", c.adaptive.purify_steps_eval}};
  j["purifier"] = {{"gamma", c.purifier.gamma}, {"xi", c.purifier.xi}, {"steps", c.purifier.steps}};
  const auto& t = c.train.cfg;
  j["train"] = {{"variant", c.train.variant},
                {"steps", t.steps},
                {"batch_size", t.batch_size},
                {"lr", t.optim.lr},
                {"beta1", t.optim.beta1},
                {"beta2", t.optim.beta2},
                {"adam_eps", t.optim.eps},
                {"weight_decay", t.optim.weight_decay},
                {"rho_min", t.flow.rho_min},
                {"rho_max", t.flow.rho_max},
                {"lambda_cfm", t.flow.loss.lambda_cfm},
                {"lambda_fgl", t.flow.loss.lambda_fgl},
                {"fgl_residual", residual_name(t.flow.loss.residual)},
                {"fgl_tau", t.flow.loss.tau},
                {"fgl_floor", t.flow.loss.floor}};
  j["eval"] = {{"workers", c.eval.workers},
               {"limit", c.eval.limit},
               {"psd_bins", c.eval.psd_bins},
               {"gammas", c.eval.gammas},
               {"grid_steps", c.eval.grid_steps}};
  shorten_floats(j);
  return j;
}

void reject_unknown_keys(const json& doc, const json& schema, const std::string& path) {
  if (!doc.is_object()) return;
  if (!schema.is_object()) throw ContractError("config key '" + path + "' is not a section");
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!schema.contains(it.key())) throw ContractError("unknown config key '" + key + "'");
    reject_unknown_keys(it.value(), schema.at(it.key()), key);
  }
}

RunConfig from_json(const json& doc) {
  if (!doc.is_object()) throw ContractError("config must be a JSON object");
  json merged = to_json(RunConfig{});
  reject_unknown_keys(doc, merged);
  merged.merge_patch(doc);

  RunConfig c;
  const json& d = merged["data"];
  get(d, "per_class", c.data.per_class, "data");
  get(d, "frames", c.data.frames, "data");
  get(d, "height", c.data.height, "data");
  get(d, "width", c.data.width, "data");
  get(d, "square", c.data.square, "data");
  get(d, "speed", c.data.speed, "data");
  get(d, "foreground", c.data.foreground, "data");
  get(d, "background", c.data.background, "data");
  get(d, "texture", c.data.texture, "data");

  const json& k = merged["classifier"];
  get(k, "epochs", c.classifier.epochs, "classifier");
  get(k, "batch_size", c.classifier.batch_size, "classifier");
  get(k, "lr", c.classifier.lr, "classifier");
  get(k, "weight_decay", c.classifier.weight_decay, "classifier");

  const json& p = merged["attack"]["pgd"];
  get(p, "epsilon", c.pgd.epsilon, "attack.pgd");
  get(p, "eta", c.pgd.eta, "attack.pgd");
  get(p, "iters", c.pgd.iters, "attack.pgd");
  const json& w = merged["attack"]["cw"];
  get(w, "c_init", c.cw.c_init, "attack.cw");
  get(w, "search_steps", c.cw.search_steps, "attack.cw");
  get(w, "lr", c.cw.lr, "attack.cw");
  get(w, "kappa", c.cw.kappa, "attack.cw");
  get(w, "iters", c.cw.iters, "attack.cw");
  const json& a = merged["attack"]["adaptive"];
  get(a, "epsilon", c.adaptive.epsilon, "attack.adaptive");
  get(a, "alpha", c.adaptive.alpha, "attack.adaptive");
  get(a, "iters", c.adaptive.iters, "attack.adaptive");
  get(a, "eot_samples", c.adaptive.eot_samples, "attack.adaptive");
  get(a, "restarts", c.adaptive.restarts, "attack.adaptive");
  get(a, "purify_steps_grad", c.adaptive.purify_steps_grad, "attack.adaptive");
  get(a, "purify_steps_eval", c.adaptive.purify_steps_eval, "attack.adaptive");

  const json& u = merged["purifier"];
  get(u, "gamma", c.purifier.gamma, "purifier");
  get(u, "xi", c.purifier.xi, "purifier");
  get(u, "steps", c.purifier.steps, "purifier");

  const json& t = merged["train"];
  auto& tc = c.train.cfg;
  std::string residual;
  get(t, "variant", c.train.variant, "train");
  get(t, "steps", tc.steps, "train");
  get(t, "batch_size", tc.batch_size, "train");
  get(t, "lr", tc.optim.lr, "train");
  get(t, "beta1", tc.optim.beta1, "train");
  get(t, "beta2", tc.optim.beta2, "train");
  get(t, "adam_eps", tc.optim.eps, "train");
  get(t, "weight_decay", tc.optim.weight_decay, "train");
  get(t, "rho_min", tc.flow.rho_min, "train");
  get(t, "rho_max", tc.flow.rho_max, "train");
  get(t, "lambda_cfm", tc.flow.loss.lambda_cfm, "train");
  get(t, "lambda_fgl", tc.flow.loss.lambda_fgl, "train");
  get(t, "fgl_residual", residual, "train");
  get(t, "fgl_tau", tc.flow.loss.tau, "train");
  get(t, "fgl_floor", tc.flow.loss.floor, "train");
  tc.flow.loss.residual = parse_residual(residual);
  parse_variant(c.train.variant);

  const json& e = merged["eval"];
  get(e, "workers", c.eval.workers, "eval");
  get(e, "limit", c.eval.limit, "eval");
  get(e, "psd_bins", c.eval.psd_bins, "eval");
  get(e, "gammas", c.eval.gammas, "eval");
  get(e, "grid_steps", c.eval.grid_steps, "eval");

  c.pgd.validate();
  c.cw.validate();
  c.adaptive.validate();
  c.purifier.validate();
  if (c.eval.workers == 0) throw ContractError("eval.workers must be at least 1");
  if (c.eval.gammas.empty() || c.eval.grid_steps.empty()) throw ContractError("eval grid axes must be non-empty");
  if (tc.flow.loss.lambda_cfm < 0 || tc.flow.loss.lambda_fgl < 0) throw ContractError("loss weights must be >= 0");
  return c;
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ContractError("--set expects key.path=value, got '" + assignment + "'");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ContractError("--set: empty key in '" + path + "'");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    if (!node->is_object() && !node->is_null()) throw ContractError("--set: '" + key + "' is not a section");
    start = dot + 1;
  }
}

}  // namespace fmvp::cli
