#include "travbev/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "travbev/errors.hpp"

namespace travbev {

FeatureQueue::FeatureQueue(int dim, std::size_t capacity)
    : capacity_(capacity) {
  if (dim < 1 || capacity < 1) {
    throw ConfigError("feature queue needs a positive dimension and capacity");
  }
  storage_ = Eigen::MatrixXd::Zero(dim, static_cast<Eigen::Index>(capacity));
}

void FeatureQueue::push(const Eigen::VectorXd& f) {
  if (f.size() != storage_.rows()) {
    throw ConfigError("feature dimension does not match the queue");
  }
  storage_.col(static_cast<Eigen::Index>(next_)) = f;
  next_ = (next_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

Eigen::MatrixXd FeatureQueue::snapshot() const {
  Eigen::MatrixXd out(storage_.rows(), static_cast<Eigen::Index>(size_));
  // Oldest first: when full, the oldest entry sits at next_.
  const std::size_t start = (size_ < capacity_) ? 0 : next_;
  for (std::size_t i = 0; i < size_; ++i) {
    out.col(static_cast<Eigen::Index>(i)) =
        storage_.col(static_cast<Eigen::Index>((start + i) % capacity_));
  }
  return out;
}

namespace {

Eigen::VectorXd unit_or_zero(const Eigen::VectorXd& v) {
  const double n = v.norm();
  return n > 0.0 ? Eigen::VectorXd(v / n) : v;
}

int argmax_first(const Eigen::VectorXd& values) {
  int best = 0;
  for (int i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

}  // namespace

KMeansResult kmeans(const Eigen::MatrixXd& points, int k, Rng& rng,
                    int max_iterations) {
  const Eigen::Index n = points.cols();
  if (k < 1) {
    throw ClusterError("cluster count must be positive");
  }
  if (n < k) {
    throw ClusterError("fewer points than clusters");
  }

  KMeansResult result;
  result.centroids.resize(points.rows(), k);

  // k-means++ seeding.
  std::vector<double> dist2(static_cast<std::size_t>(n),
                            std::numeric_limits<double>::infinity());
  Eigen::Index first = static_cast<Eigen::Index>(
      rng.uniform_index(static_cast<std::size_t>(n)));
  result.centroids.col(0) = unit_or_zero(points.col(first));
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d =
          (points.col(i) - result.centroids.col(c - 1)).squaredNorm();
      dist2[static_cast<std::size_t>(i)] =
          std::min(dist2[static_cast<std::size_t>(i)], d);
      total += dist2[static_cast<std::size_t>(i)];
    }
    Eigen::Index chosen;
    if (total > 0.0) {
      const double u = rng.uniform() * total;
      double acc = 0.0;
      chosen = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += dist2[static_cast<std::size_t>(i)];
        if (u < acc) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = static_cast<Eigen::Index>(
          rng.uniform_index(static_cast<std::size_t>(n)));
    }
    result.centroids.col(c) = unit_or_zero(points.col(chosen));
  }

  result.assignment.assign(static_cast<std::size_t>(n), -1);
  std::vector<int> previous(result.assignment);
  for (int iter = 0; iter < max_iterations; ++iter) {
    result.iterations = iter + 1;
    // Assign: highest cosine, first index on ties. Points are compared by
    // dot product against unit centroids, which preserves the argmax.
    const Eigen::MatrixXd sims = result.centroids.transpose() * points;
    for (Eigen::Index i = 0; i < n; ++i) {
      result.assignment[static_cast<std::size_t>(i)] =
          argmax_first(sims.col(i));
    }
    if (result.assignment == previous) {
      result.converged = true;
      break;
    }
    previous = result.assignment;

    // Update: renormalized means; empty clusters restart from the point
    // farthest from its own centroid.
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(points.rows(), k);
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int a = result.assignment[static_cast<std::size_t>(i)];
      sums.col(a) += points.col(i);
      ++counts[static_cast<std::size_t>(a)];
    }
    std::vector<std::uint8_t> reseeded(static_cast<std::size_t>(n), 0);
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        result.centroids.col(c) = unit_or_zero(sums.col(c));
      } else {
        Eigen::Index farthest = -1;
        double worst = -1.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          if (reseeded[static_cast<std::size_t>(i)]) continue;
          const int a = result.assignment[static_cast<std::size_t>(i)];
          const double d = (points.col(i) - result.centroids.col(a)).norm();
          if (d > worst) {
            worst = d;
            farthest = i;
          }
        }
        reseeded[static_cast<std::size_t>(farthest)] = 1;
        result.centroids.col(c) = unit_or_zero(points.col(farthest));
      }
    }
  }
  return result;
}

PrototypeHierarchy build_hierarchy(const Eigen::MatrixXd& points,
                                   const std::vector<int>& cluster_counts,
                                   Rng& rng) {
  PrototypeHierarchy hierarchy;
  for (const int k : cluster_counts) {
    if (k < 1 || points.cols() < k) {
      continue;  // not enough material for this granularity yet
    }
    hierarchy.levels.push_back(kmeans(points, k, rng).centroids);
  }
  return hierarchy;
}

int nearest_prototype(const Eigen::VectorXd& z,
                      const Eigen::MatrixXd& prototypes) {
  if (prototypes.cols() < 1) {
    throw ClusterError("no prototypes to assign to");
  }
  const double zn = z.norm();
  Eigen::VectorXd sims = prototypes.transpose() * z;
  for (Eigen::Index i = 0; i < sims.size(); ++i) {
    const double pn = prototypes.col(i).norm();
    sims[i] /= std::max(zn * pn, 1e-300);
  }
  return argmax_first(sims);
}

NegativeDraws draw_negatives(std::size_t n_samples,
                             const PrototypeHierarchy& negatives,
                             int count_per_sample, Rng& rng) {
  if (count_per_sample < 1) {
    throw ConfigError("need at least one negative per sample");
  }
  NegativeDraws draws(negatives.level_count());
  for (std::size_t m = 0; m < negatives.level_count(); ++m) {
    const std::size_t available =
        static_cast<std::size_t>(negatives.levels[m].cols());
    draws[m].resize(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
      const auto picks = rng.sample_without_replacement(
          available, static_cast<std::size_t>(count_per_sample));
      draws[m][i].assign(picks.begin(), picks.end());
    }
  }
  return draws;
}

double contrast_loss(const Eigen::MatrixXd& z_trav,
                     const Eigen::MatrixXd& z_untrav, double tau,
                     Eigen::MatrixXd* grad_trav,
                     Eigen::MatrixXd* grad_untrav) {
  const Eigen::Index n = z_trav.cols();
  const Eigen::Index u = z_untrav.cols();
  if (n < 2 || u < 1) {
    throw ConfigError(
        "pairwise alignment needs two anchors and an opposing feature");
  }
  if (!(tau > 0.0)) {
    throw ConfigError("temperature must be positive");
  }

  // Positive part: mean over ordered pairs of z_i . z_j / tau.
  const Eigen::MatrixXd pos = (z_trav.transpose() * z_trav) / tau;
  const double pos_sum = pos.sum() - pos.trace();

  // Normalizer: stabilized log-sum-exp over the opposing class, per anchor.
  const Eigen::MatrixXd neg = (z_trav.transpose() * z_untrav) / tau;
  const Eigen::VectorXd row_max = neg.rowwise().maxCoeff();
  const Eigen::MatrixXd shifted =
      (neg.colwise() - row_max).array().exp().matrix();
  const Eigen::VectorXd row_sum = shifted.rowwise().sum();
  const Eigen::VectorXd lse = row_max.array() + row_sum.array().log();

  const double pairs = static_cast<double>(n) * (n - 1);
  const double loss = -pos_sum / pairs + lse.sum() / n;

  if (grad_trav != nullptr) {
    const Eigen::VectorXd total = z_trav.rowwise().sum();
    grad_trav->resize(z_trav.rows(), n);
    // softmax over the opposing class for each anchor
    const Eigen::MatrixXd soft = shifted.array().colwise() /
                                 row_sum.array();
    const Eigen::MatrixXd lse_part = z_untrav * soft.transpose();
    for (Eigen::Index i = 0; i < n; ++i) {
      grad_trav->col(i) = (-2.0 / (pairs * tau)) * (total - z_trav.col(i)) +
                          lse_part.col(i) / (n * tau);
    }
    if (grad_untrav != nullptr) {
      grad_untrav->noalias() = z_trav * soft;
      *grad_untrav /= static_cast<double>(n) * tau;
    }
  } else if (grad_untrav != nullptr) {
    const Eigen::MatrixXd soft =
        shifted.array().colwise() / row_sum.array();
    grad_untrav->noalias() = z_trav * soft;
    *grad_untrav /= static_cast<double>(n) * tau;
  }
  return loss;
}

double proto_loss(const Eigen::MatrixXd& z,
                  const PrototypeHierarchy& positives,
                  const PrototypeHierarchy& negatives,
                  const NegativeDraws& draws, double tau,
                  bool literal_denominator, Eigen::MatrixXd* grad) {
  const Eigen::Index n = z.cols();
  if (n < 1) {
    throw ConfigError("prototype alignment needs at least one feature");
  }
  if (!(tau > 0.0)) {
    throw ConfigError("temperature must be positive");
  }
  const std::size_t m_levels =
      std::min(positives.level_count(), negatives.level_count());
  if (m_levels < 1) {
    throw ClusterError("prototype alignment needs at least one granularity");
  }
  if (draws.size() < m_levels) {
    throw ConfigError("negative draws do not cover every granularity");
  }

  if (grad != nullptr) {
    grad->setZero(z.rows(), n);
  }
  double loss = 0.0;
  for (std::size_t m = 0; m < m_levels; ++m) {
    const Eigen::MatrixXd& pos = positives.levels[m];
    const Eigen::MatrixXd& neg = negatives.levels[m];
    for (Eigen::Index i = 0; i < n; ++i) {
      if (draws[m][static_cast<std::size_t>(i)].empty()) {
        throw ConfigError("empty negative draw");
      }
      const int s = nearest_prototype(z.col(i), pos);
      const double a_pos = z.col(i).dot(pos.col(s)) / tau;

      const auto& picked = draws[m][static_cast<std::size_t>(i)];
      // Terms of the normalizer: the positive leads in the default form.
      std::vector<double> terms;
      terms.reserve(picked.size() + 1);
      if (!literal_denominator) terms.push_back(a_pos);
      for (const int j : picked) {
        terms.push_back(z.col(i).dot(neg.col(j)) / tau);
      }
      const double top = *std::max_element(terms.begin(), terms.end());
      double sum_exp = 0.0;
      for (const double t : terms) sum_exp += std::exp(t - top);
      const double lse = top + std::log(sum_exp);
      loss += lse - a_pos;

      if (grad != nullptr) {
        // d lse / dz = sum softmax_t . proto_t / tau; then minus the
        // positive's direct term.
        std::size_t t_idx = 0;
        if (!literal_denominator) {
          const double w = std::exp(terms[t_idx++] - top) / sum_exp;
          grad->col(i) += w * pos.col(s) / tau;
        }
        for (const int j : picked) {
          const double w = std::exp(terms[t_idx++] - top) / sum_exp;
          grad->col(i) += w * neg.col(j) / tau;
        }
        grad->col(i) -= pos.col(s) / tau;
      }
    }
  }
  const double scale = static_cast<double>(n) * m_levels;
  if (grad != nullptr) *grad /= scale;
  return loss / scale;
}

int assign_unlabeled(const Eigen::VectorXd& z, const Eigen::MatrixXd& trav,
                     const Eigen::MatrixXd& untrav) {
  if (trav.cols() + untrav.cols() < 1) {
    throw ClusterError("no prototypes to assign to");
  }
  Eigen::MatrixXd joined(z.size(), trav.cols() + untrav.cols());
  joined << trav, untrav;
  return nearest_prototype(z, joined);
}

double unlabel_loss(const Eigen::MatrixXd& z_unlabel,
                    const PrototypeHierarchy& trav,
                    const PrototypeHierarchy& untrav,
                    const Eigen::MatrixXd& noise, Eigen::MatrixXd* grad) {
  const Eigen::Index n = z_unlabel.cols();
  if (n < 1) {
    throw ConfigError("pseudo-label alignment needs at least one feature");
  }
  if (noise.rows() != z_unlabel.rows() || noise.cols() != n) {
    throw ConfigError("noise must match the feature block");
  }
  const std::size_t m_levels =
      std::min(trav.level_count(), untrav.level_count());
  if (m_levels < 1) {
    throw ClusterError("pseudo-label alignment needs a granularity");
  }

  if (grad != nullptr) {
    grad->setZero(z_unlabel.rows(), n);
  }
  double loss = 0.0;
  for (std::size_t m = 0; m < m_levels; ++m) {
    Eigen::MatrixXd joined(z_unlabel.rows(),
                           trav.levels[m].cols() + untrav.levels[m].cols());
    joined << trav.levels[m], untrav.levels[m];
    for (Eigen::Index i = 0; i < n; ++i) {
      const int s = nearest_prototype(z_unlabel.col(i), joined);
      const Eigen::VectorXd v = z_unlabel.col(i) + noise.col(i);
      const Eigen::VectorXd diff = v - joined.col(s);
      loss += diff.squaredNorm();
      if (grad != nullptr) {
        grad->col(i) += 2.0 * diff;
      }
    }
  }
  const double scale = static_cast<double>(n) * m_levels;
  if (grad != nullptr) *grad /= scale;
  return loss / scale;
}

Tensor bev_to_tensor(const BevGrid& bev) {
  Tensor t = Tensor::zeros(3, bev.spec.height_cells, bev.spec.width_cells);
  for (std::size_t i = 0; i < bev.spec.cell_count(); ++i) {
    if (!bev.occupancy[i]) continue;
    const Rgb c = bev.colors[i];
    const Eigen::Index j = static_cast<Eigen::Index>(i);
    t.data(0, j) = c.r / 255.0;
    t.data(1, j) = c.g / 255.0;
    t.data(2, j) = c.b / 255.0;
  }
  return t;
}

AdamOptimizer::AdamOptimizer(std::size_t n_params, double beta1, double beta2,
                             double epsilon)
    : m_(n_params, 0.0),
      v_(n_params, 0.0),
      beta1_(beta1),
      beta2_(beta2),
      epsilon_(epsilon) {}

void AdamOptimizer::step(std::vector<float>& params,
                         const std::vector<double>& grads, double lr) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw ConfigError("optimizer state does not match the parameters");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i] * grads[i];
    const double update =
        lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + epsilon_);
    params[i] = static_cast<float>(static_cast<double>(params[i]) - update);
  }
}

namespace {

struct PixelSamples {
  std::vector<Eigen::Index> trav, untrav, unlabeled;
};

PixelSamples sample_pixels(const TrainFrame& frame, int per_class, Rng& rng) {
  std::vector<Eigen::Index> trav_all, untrav_all, unlabeled_all;
  const std::size_t cells = frame.bev.spec.cell_count();
  for (std::size_t i = 0; i < cells; ++i) {
    if (!frame.bev.occupancy[i]) continue;  // unobserved cells never train
    switch (static_cast<CellLabel>(frame.labels.labels[i])) {
      case CellLabel::kTraversable:
        trav_all.push_back(static_cast<Eigen::Index>(i));
        break;
      case CellLabel::kUntraversable:
        untrav_all.push_back(static_cast<Eigen::Index>(i));
        break;
      case CellLabel::kUnlabeled:
        unlabeled_all.push_back(static_cast<Eigen::Index>(i));
        break;
    }
  }
  auto pick = [&](const std::vector<Eigen::Index>& all) {
    const auto idx = rng.sample_without_replacement(
        all.size(), static_cast<std::size_t>(per_class));
    std::vector<Eigen::Index> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = all[idx[i]];
    return out;
  };
  return {pick(trav_all), pick(untrav_all), pick(unlabeled_all)};
}

Eigen::MatrixXd gather(const Tensor& z, const std::vector<Eigen::Index>& idx) {
  Eigen::MatrixXd out(z.data.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.col(static_cast<Eigen::Index>(i)) = z.data.col(idx[i]);
  }
  return out;
}

void scatter_add(Tensor& target, const std::vector<Eigen::Index>& idx,
                 const Eigen::MatrixXd& grads, double scale) {
  for (std::size_t i = 0; i < idx.size(); ++i) {
    target.data.col(idx[i]) +=
        scale * grads.col(static_cast<Eigen::Index>(i));
  }
}

void validate_config(const TrainConfig& cfg) {
  if (!(cfg.tau > 0.0) || cfg.lambda_ramp_epochs < 1 || cfg.epochs < 0 ||
      cfg.batch_frames < 1 || cfg.pixels_per_class < 1 ||
      cfg.queue_capacity < 1 || !(cfg.learning_rate > 0.0) ||
      cfg.negatives_per_sample < 1 || cfg.sigma < 0.0 ||
      !(cfg.divergence_limit > 0.0) || cfg.lambda_max < 0.0 ||
      cfg.cluster_counts.empty()) {
    throw ConfigError("invalid training configuration");
  }
}

}  // namespace

TrainResult train_model(FeatureNet& net, const std::vector<TrainFrame>& frames,
                        const TrainConfig& cfg,
                        const std::filesystem::path* metrics_csv) {
  validate_config(cfg);
  if (frames.empty()) {
    throw ConfigError("no frames to train on");
  }
  for (const TrainFrame& f : frames) {
    if (f.labels.labels.size() != f.bev.spec.cell_count() ||
        f.labels.spec != f.bev.spec) {
      throw ConfigError("labels do not match their grid");
    }
  }

  const int dim = net.arch().embed_dim;
  Rng root(cfg.seed);
  FeatureQueue queue_trav(dim, cfg.queue_capacity);
  FeatureQueue queue_untrav(dim, cfg.queue_capacity);
  AdamOptimizer adam(net.param_count());

  std::ofstream csv;
  if (metrics_csv != nullptr) {
    csv.open(*metrics_csv, std::ios::trunc);
    if (!csv) {
      throw IoError("cannot open metrics file: " + metrics_csv->string());
    }
    csv << "epoch,loss_total,loss_contrast,loss_cluster,loss_unlabel,lambda,"
           "learning_rate,skipped_contrast,skipped_cluster,skipped_unlabel\n";
  }

  const bool want_prototypes = cfg.loss_mode != LossMode::kContrastOnly;
  const bool want_contrast = cfg.loss_mode != LossMode::kPrototypeOnly;

  TrainResult result;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochStats stats;
    stats.epoch = epoch;
    stats.lambda =
        cfg.lambda_max *
        std::min(1.0, static_cast<double>(epoch) / cfg.lambda_ramp_epochs);
    stats.learning_rate =
        cfg.learning_rate *
        std::pow(1.0 - static_cast<double>(epoch - 1) / cfg.epochs,
                 cfg.lr_decay_power);

    Rng epoch_rng = root.fork();

    // Prototypes come from the queues as filled by earlier epochs.
    PrototypeHierarchy protos_trav, protos_untrav;
    if (want_prototypes && queue_trav.size() > 0 && queue_untrav.size() > 0) {
      protos_trav =
          build_hierarchy(queue_trav.snapshot(), cfg.cluster_counts, epoch_rng);
      protos_untrav = build_hierarchy(queue_untrav.snapshot(),
                                      cfg.cluster_counts, epoch_rng);
    }
    const bool prototypes_ready =
        !protos_trav.empty() && !protos_untrav.empty();

    std::vector<std::size_t> order(frames.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    epoch_rng.shuffle(order);

    double sum_total = 0.0, sum_contrast = 0.0, sum_cluster = 0.0,
           sum_unlabel = 0.0;
    std::size_t frames_used = 0;

    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_frames)) {
      const std::size_t end = std::min(
          order.size(), start + static_cast<std::size_t>(cfg.batch_frames));
      const double batch_scale = 1.0 / static_cast<double>(end - start);
      net.zero_grad();

      for (std::size_t b = start; b < end; ++b) {
        const TrainFrame& frame = frames[order[b]];
        const Tensor input = bev_to_tensor(frame.bev);
        const Tensor z = net.forward(input, /*train=*/true);
        const PixelSamples samples =
            sample_pixels(frame, cfg.pixels_per_class, epoch_rng);

        const Eigen::MatrixXd z_trav = gather(z, samples.trav);
        const Eigen::MatrixXd z_untrav = gather(z, samples.untrav);
        const Eigen::MatrixXd z_unlabeled = gather(z, samples.unlabeled);

        Tensor grad = Tensor::zeros(z.channels, z.height, z.width);
        double frame_contrast = 0.0, frame_cluster = 0.0, frame_unlabel = 0.0;

        if (want_contrast) {
          if (z_trav.cols() >= 2 && z_untrav.cols() >= 1) {
            Eigen::MatrixXd g_trav, g_untrav;
            frame_contrast = contrast_loss(z_trav, z_untrav, cfg.tau, &g_trav,
                                           &g_untrav);
            scatter_add(grad, samples.trav, g_trav, batch_scale);
            scatter_add(grad, samples.untrav, g_untrav, batch_scale);
          } else {
            ++stats.skipped_contrast;
          }
        }

        if (want_prototypes && prototypes_ready) {
          const int draw_count = cfg.literal_proto_denominator
                                     ? cfg.negatives_per_sample + 1
                                     : cfg.negatives_per_sample;
          double cluster_sum = 0.0;
          bool cluster_any = false;
          if (z_trav.cols() >= 1) {
            const NegativeDraws draws =
                draw_negatives(static_cast<std::size_t>(z_trav.cols()),
                               protos_untrav, draw_count, epoch_rng);
            Eigen::MatrixXd g;
            cluster_sum +=
                proto_loss(z_trav, protos_trav, protos_untrav, draws, cfg.tau,
                           cfg.literal_proto_denominator, &g);
            scatter_add(grad, samples.trav, g,
                        batch_scale * stats.lambda);
            cluster_any = true;
          }
          if (z_untrav.cols() >= 1) {
            const NegativeDraws draws =
                draw_negatives(static_cast<std::size_t>(z_untrav.cols()),
                               protos_trav, draw_count, epoch_rng);
            Eigen::MatrixXd g;
            cluster_sum +=
                proto_loss(z_untrav, protos_untrav, protos_trav, draws,
                           cfg.tau, cfg.literal_proto_denominator, &g);
            scatter_add(grad, samples.untrav, g,
                        batch_scale * stats.lambda);
            cluster_any = true;
          }
          if (cluster_any) {
            frame_cluster = cluster_sum;
          } else {
            ++stats.skipped_cluster;
          }

          if (z_unlabeled.cols() >= 1) {
            Eigen::MatrixXd noise(dim, z_unlabeled.cols());
            for (Eigen::Index c = 0; c < noise.cols(); ++c) {
              for (int r = 0; r < dim; ++r) {
                noise(r, c) = cfg.sigma * epoch_rng.gaussian();
              }
            }
            Eigen::MatrixXd g;
            frame_unlabel = unlabel_loss(z_unlabeled, protos_trav,
                                         protos_untrav, noise, &g);
            scatter_add(grad, samples.unlabeled, g,
                        batch_scale * stats.lambda);
          } else {
            ++stats.skipped_unlabel;
          }
        } else if (want_prototypes) {
          ++stats.skipped_cluster;
          ++stats.skipped_unlabel;
        }

        const double frame_total =
            frame_contrast + stats.lambda * (frame_cluster + frame_unlabel);
        if (!std::isfinite(frame_total) ||
            std::abs(frame_total) > cfg.divergence_limit) {
          throw DivergenceError("training loss left the stable range");
        }
        sum_total += frame_total;
        sum_contrast += frame_contrast;
        sum_cluster += frame_cluster;
        sum_unlabel += frame_unlabel;
        ++frames_used;

        net.backward(grad);

        // The queues collect this frame's labeled embeddings for the next
        // epoch's clustering.
        for (Eigen::Index c = 0; c < z_trav.cols(); ++c) {
          queue_trav.push(z_trav.col(c));
        }
        for (Eigen::Index c = 0; c < z_untrav.cols(); ++c) {
          queue_untrav.push(z_untrav.col(c));
        }
      }

      std::vector<float> params = net.parameters();
      adam.step(params, net.gradients(), stats.learning_rate);
      net.set_parameters(params);
    }

    const double norm = frames_used > 0 ? static_cast<double>(frames_used)
                                        : 1.0;
    stats.loss_total = sum_total / norm;
    stats.loss_contrast = sum_contrast / norm;
    stats.loss_cluster = sum_cluster / norm;
    stats.loss_unlabel = sum_unlabel / norm;
    result.history.push_back(stats);

    if (csv.is_open()) {
      csv << stats.epoch << ',' << stats.loss_total << ','
          << stats.loss_contrast << ',' << stats.loss_cluster << ','
          << stats.loss_unlabel << ',' << stats.lambda << ','
          << stats.learning_rate << ',' << stats.skipped_contrast << ','
          << stats.skipped_cluster << ',' << stats.skipped_unlabel << '\n';
    }
  }
  if (csv.is_open() && !csv) {
    throw IoError("failed writing metrics");
  }
  return result;
}

}  // namespace travbev
