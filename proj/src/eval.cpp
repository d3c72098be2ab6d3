// SPDX-License-Identifier: Apache-2.0
#include "fusion/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fusion/kernels.hpp"
#include "fusion/parallel.hpp"

namespace fusion {

Vec factor_posterior(const MixtureWorld& world, VecView x, Factor factor) {
  require_dim("factor_posterior: sample", x, world.dim());
  if (!all_finite(x)) throw InvalidArgument("factor_posterior: non-finite sample");
  const std::size_t K = world.num_components();
  Vec logp(K);
  const double inv = 1.0 / world.variance();
  for (std::size_t k = 0; k < K; ++k) logp[k] = -0.5 * inv * kernels::sq_dist(x, world.mean(k));
  const double top = *std::max_element(logp.begin(), logp.end());
  const std::size_t n = factor == Factor::identity ? world.num_identities() : world.num_styles();
  Vec out(n, 0.0);
  double total = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const double w = std::exp(logp[k] - top);
    out[factor == Factor::identity ? world.identity_of(k) : world.style_of(k)] += w;
    total += w;
  }
  for (double& v : out) v /= total;
  return out;
}

double component_responsibility(const MixtureWorld& world, VecView x, Factor factor,
                                std::size_t index) {
  const Vec post = factor_posterior(world, x, factor);
  if (index >= post.size()) throw InvalidArgument("component_responsibility: index out of range");
  return post[index];
}

AdherenceReport adherence_scores(const std::vector<Vec>& samples, const MixtureWorld& world,
                                 std::size_t target_identity, std::size_t target_style) {
  if (samples.empty()) throw InvalidArgument("adherence_scores: no samples");
  AdherenceReport report;
  report.rows.reserve(samples.size());
  for (const Vec& x : samples) {
    AdherenceRow row{component_responsibility(world, x, Factor::identity, target_identity),
                     component_responsibility(world, x, Factor::style, target_style)};
    report.identity_score += row.identity;
    report.style_score += row.style;
    report.rows.push_back(row);
  }
  report.identity_score /= static_cast<double>(samples.size());
  report.style_score /= static_cast<double>(samples.size());
  return report;
}

GuidanceWeights AblationSetup::default_weights() {
  GuidanceWeights w;
  w.omega = 2.0;
  w.omega1 = 0.0;
  w.omega2 = 2.0;
  return w;
}

ConditionSet ablation_conditions(const AblationSetup& s) {
  return ConditionSet::joint(
      identity_log_weights(s.world, s.target_identity, s.identity_strength, s.reference_style,
                           s.leak_strength),
      style_log_weights(s.world, s.target_style, s.text_strength));
}

std::vector<Variant> ablation_variants(const AblationSetup& s) {
  FusionConfig base;
  base.gamma = s.gamma;
  base.m = s.m;
  base.weights = s.weights;
  base.sigma = s.sigma;
  base.update = s.update;

  std::vector<Variant> out;
  FusionConfig c = base;
  c.mode = SamplerMode::vanilla_cfg;
  out.push_back({"vanilla_cfg", c});
  c = base;
  c.mode = SamplerMode::independent;
  out.push_back({"independent", c});
  c = base;
  c.use_refinement = false;
  out.push_back({"fusion_no_refinement", c});
  c = base;
  c.m = 0;
  out.push_back({"fusion_no_fusion_stage", c});
  out.push_back({"fusion_full", base});
  return out;
}

AblationTable run_variants(const std::vector<Variant>& variants, const ConditionSet& cond,
                           const NoisePredictor& predictor, const MixtureWorld& world,
                           std::size_t target_identity, std::size_t target_style,
                           const std::vector<std::uint64_t>& seeds, std::size_t samples,
                           unsigned workers) {
  if (variants.empty() || seeds.empty()) throw InvalidArgument("ablation: need variants and seeds");
  if (samples == 0) throw InvalidArgument("ablation: need at least one sample");
  AblationTable table;
  const std::size_t cells = variants.size() * seeds.size();
  table.rows.resize(cells);
  parallel_for(cells, workers, [&](std::size_t cell) {
    const Variant& v = variants[cell / seeds.size()];
    const std::uint64_t seed = seeds[cell % seeds.size()];
    RunRecord rec = sample_trajectory(cond, v.config, predictor, samples, seed);
    const AdherenceReport rep = adherence_scores(rec.samples, world, target_identity, target_style);
    table.rows[cell] = AblationRow{v.name, seed, rep.identity_score, rep.style_score, std::move(rec.samples)};
  });
  for (std::size_t vi = 0; vi < variants.size(); ++vi) {
    VariantSummary sum{variants[vi].name, 0.0, 0.0};
    for (std::size_t si = 0; si < seeds.size(); ++si) {
      sum.identity_score += table.rows[vi * seeds.size() + si].identity_score;
      sum.style_score += table.rows[vi * seeds.size() + si].style_score;
    }
    sum.identity_score /= static_cast<double>(seeds.size());
    sum.style_score /= static_cast<double>(seeds.size());
    table.summary.push_back(sum);
  }
  return table;
}

AblationTable ablation_suite(const AblationSetup& s) {
  const OraclePredictor oracle(s.world, s.schedule);
  return run_variants(ablation_variants(s), ablation_conditions(s), oracle, s.world, s.target_identity,
                      s.target_style, s.seeds, s.samples, s.workers);
}

TrainingConfig SweepSetup::default_training() {
  TrainingConfig tc;
  tc.steps = 3000;
  tc.batch = 64;
  return tc;
}

Vec reference_sample(const MixtureWorld& world, std::size_t identity, std::size_t style,
                     std::uint64_t seed) {
  Rng rng = Rng::stream(seed, 7);
  return world.draw_component(identity, style, rng);
}

AdherenceReport prompted_adherence(const ToyPromptNet& net, const ToyDenoiser& denoiser,
                                   const MixtureWorld& world, VecView x_ref,
                                   std::size_t target_identity,
                                   const std::vector<std::size_t>& prompt_styles, double omega,
                                   const SigmaProfile& sigma, std::size_t samples,
                                   std::uint64_t seed, unsigned workers,
                                   std::vector<Vec>* samples_out) {
  if (prompt_styles.empty()) throw InvalidArgument("prompted_adherence: no prompt styles");
  const PromptedDenoiser prompted(net, denoiser, Vec(x_ref.begin(), x_ref.end()));
  FusionConfig cfg;
  cfg.mode = SamplerMode::vanilla_cfg;
  cfg.weights.omega = omega;
  cfg.sigma = sigma;
  AdherenceReport total;
  for (std::size_t p = 0; p < prompt_styles.size(); ++p) {
    const std::size_t style = prompt_styles[p];
    // The identity slot is a placeholder; the prompted predictor fills in S*.
    const ConditionSet cond = ConditionSet::joint(Vec(denoiser.identity_dim(), 0.0), text_embedding(world, style));
    TrajectoryOptions opts;
    opts.workers = workers;
    const RunRecord rec = sample_trajectory(cond, cfg, prompted, samples, seed + p, opts);
    const AdherenceReport rep = adherence_scores(rec.samples, world, target_identity, style);
    total.identity_score += rep.identity_score;
    total.style_score += rep.style_score;
    total.rows.insert(total.rows.end(), rep.rows.begin(), rep.rows.end());
    if (samples_out) samples_out->insert(samples_out->end(), rec.samples.begin(), rec.samples.end());
  }
  total.identity_score /= static_cast<double>(prompt_styles.size());
  total.style_score /= static_cast<double>(prompt_styles.size());
  return total;
}

std::vector<SweepRow> regularization_sweep(const SweepSetup& s, const ToyDenoiser& denoiser) {
  if (s.lambdas.empty() || s.seeds.empty()) throw InvalidArgument("sweep: need lambdas and seeds");
  const std::size_t cells = s.lambdas.size() * s.seeds.size();
  std::vector<SweepRow> rows(cells);
  parallel_for(cells, s.workers, [&](std::size_t cell) {
    const double lambda = s.lambdas[cell / s.seeds.size()];
    const std::uint64_t seed = s.seeds[cell % s.seeds.size()];
    const double nan = std::numeric_limits<double>::quiet_NaN();
    SweepRow row{lambda, seed, nan, nan, nan, nan, "ok"};
    try {
      TrainingConfig tc = s.training;
      tc.lambda = lambda;
      tc.seed = seed;
      const ToyPromptNet net = train_promptnet(s.world, denoiser, tc);
      const EncoderMetrics em = evaluate_encoder(s.world, net, denoiser, s.eval_draws, seed + 1000);
      const Vec x_ref = reference_sample(s.world, s.target_identity, s.reference_style, seed);
      const AdherenceReport rep = prompted_adherence(net, denoiser, s.world, x_ref, s.target_identity,
                                                     {s.target_style}, s.omega, s.sigma, s.samples, seed);
      row.reconstruction_error = em.reconstruction_error;
      row.embedding_norm = em.embedding_norm;
      row.identity_score = rep.identity_score;
      row.style_score = rep.style_score;
    } catch (const std::exception& e) {
      row.status = e.what();
    }
    rows[cell] = row;
  });
  return rows;
}

std::vector<SweepRow> regularization_sweep(const SweepSetup& s) {
  const ToyDenoiser denoiser =
      train_denoiser(s.world, s.schedule, s.denoiser_steps, s.denoiser_seed, s.denoiser_options);
  return regularization_sweep(s, denoiser);
}

}  // namespace fusion
