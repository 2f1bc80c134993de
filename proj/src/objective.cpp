#include "dccm/objective.hpp"

#include <sstream>

#include "dccm/errors.hpp"
#include "dccm/ops.hpp"

namespace dccm {

ObjectiveSettings ObjectiveSettings::from_config(const ExperimentConfig& c) {
  ObjectiveSettings s;
  s.thres1 = c.thres1;
  s.thres2 = c.thres2;
  s.alpha = c.alpha;
  s.beta = c.beta;
  s.gamma = c.gamma;
  s.toggles = c.toggles;
  s.sampling = c.sampling;
  s.mi_pairs = c.mi_pairs;
  s.transform = c.transform;
  return s;
}

StepTargets compute_targets(const Tensor& z, const ObjectiveSettings& s, std::uint64_t sampling_seed) {
  StepTargets t;
  t.similarity = cosine_similarity_values(z);
  t.graph = build_pseudo_graph(t.similarity, s.thres1);
  t.labels = assign_pseudo_labels(z, s.thres2);
  if (s.toggles.use_mi) {
    const std::size_t n = s.mi_pairs == 0 ? z.dim(0) : std::min(s.mi_pairs, z.dim(0));
    try {
      t.pairs = sample_triplet_pairs(t.graph, t.similarity, s.sampling, n, sampling_seed);
    } catch (const DegenerateBatchError&) {
      t.pairs.reset();
    }
  }
  return t;
}

StepResult build_objective(Tape& tape, Encoder& encoder, Discriminator& disc, const Tensor& batch,
                           const ObjectiveSettings& s, std::uint64_t transform_seed, std::uint64_t sampling_seed,
                           const StepTargets* fixed) {
  StepResult r;
  r.parts.alpha = s.alpha;
  r.parts.beta = s.toggles.use_mi ? s.beta : 0.0;
  r.parts.gamma = s.toggles.use_feature_invariance ? s.gamma : 0.0;

  const EncoderOutput out = encoder.forward(tape, tape.constant(batch));
  r.targets = fixed ? *fixed : compute_targets(out.z.value(), s, sampling_seed);
  const StepTargets& t = r.targets;

  Var total = pseudo_graph_loss(cosine_similarity(out.z), t.graph);
  r.parts.l_pg = total.value().item();
  if (s.toggles.use_pseudo_label) {
    Var pl = pseudo_label_loss(out.z, t.labels);
    r.parts.l_pl = pl.value().item();
    total = ops::add(total, ops::scale(pl, s.alpha));
  }

  if (s.toggles.use_robustness || s.toggles.use_feature_invariance) {
    TransformSpec spec = s.transform;
    spec.seed = transform_seed;
    const TransformedBatch tb = apply_transform(batch, spec);
    const EncoderOutput out_t = encoder.forward(tape, tape.constant(tb.x));
    if (s.toggles.use_robustness) {
      const RobustnessLosses rl = robustness_losses(out_t.z, cosine_similarity(out_t.z), t.graph, t.labels, s.alpha);
      r.parts.l_pg_prime = rl.pg.value().item();
      total = ops::add(total, rl.pg);
      if (s.toggles.use_pseudo_label) {
        r.parts.l_pl_prime = rl.pl.value().item();
        total = ops::add(total, ops::scale(rl.pl, s.alpha));
      }
    }
    if (s.toggles.use_feature_invariance) {
      Var fi = feature_invariance_loss(out.z, out_t.z);
      r.parts.l_fi = fi.value().item();
      total = ops::add(total, ops::scale(fi, s.gamma));
    }
  }

  if (s.toggles.use_mi) {
    if (t.pairs) {
      Var mi = triplet_mi_loss(disc, out.deep, out.shallow, *t.pairs);
      r.parts.l_mi = mi.value().item();
      total = ops::add(total, ops::scale(mi, s.beta));
    } else {
      r.mi_skipped = true;
    }
  }

  try {
    r.parts.total = total_loss(r.parts);
  } catch (const DivergenceError& e) {
    std::ostringstream msg;
    msg << e.what() << " (l_pg=" << r.parts.l_pg << " l_pg_t=" << r.parts.l_pg_prime << " l_pl=" << r.parts.l_pl
        << " l_pl_t=" << r.parts.l_pl_prime << " l_mi=" << r.parts.l_mi << " l_fi=" << r.parts.l_fi << ")";
    throw DivergenceError(msg.str());
  }
  r.loss = total;
  return r;
}

}  // namespace dccm
