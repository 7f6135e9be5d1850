#pragma once

// Recurrent classifier mapping a learning state to a composition plan.
//
// The network is a single LSTM cell consuming the horizon as a sequence of
// segment frames (the dynamic state broadcast into every frame, plus each
// platform's demand for that segment), followed by one categorical head per
// (decided route, horizon cycle). Training is minibatch gradient descent on
// the summed cross-entropy of all heads, with optional inverted dropout on
// the final hidden vector and an optional halve-on-plateau learning-rate
// schedule that never accepts a worse epoch. All randomness is seeded.
//
// Weights live in one flat vector so updates, finite-difference checks and
// serialization all touch the same storage:
//   W (4 gates x hidden x input) | U (4 x hidden x hidden) | b (4 x hidden) |
//   head weights (heads x classes x hidden) | head biases (heads x classes)
// Gate order: input, forget, cell, output.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "railmpc/dataset.hpp"
#include "railmpc/network.hpp"
#include "railmpc/reduction.hpp"

namespace railmpc {

struct HyperParams {
  double learning_rate = 1e-2;
  int hidden_size = 32;
  double dropout = 0.0;
  bool mask_outputs = true;
  bool lr_schedule = true;
  int epochs = 60;
  int batch_size = 32;
  std::uint64_t seed = 1;
};

struct ClassifierModel {
  HyperParams params;
  int x_dim = 0;
  int n_platforms = 0;
  int seq_len = 0;        // frames consumed (segments of the reduction)
  int decided_routes = 0; // routes with a composition decision
  int horizon = 0;        // cycles predicted per route
  int classes = 0;
  int units_min = 1;
  std::vector<double> theta;       // packed weights, layout above
  std::vector<double> feat_mean;   // training-set feature statistics
  std::vector<double> feat_scale;

  int input_dim() const { return x_dim + n_platforms; }
  int heads() const { return decided_routes * horizon; }
  int feature_dim() const { return x_dim + n_platforms * seq_len; }

  int hidden() const { return params.hidden_size; }
  std::size_t w_size() const { return 4ul * hidden() * input_dim(); }
  std::size_t u_size() const { return 4ul * hidden() * hidden(); }
  std::size_t b_size() const { return 4ul * hidden(); }
  std::size_t head_w_size() const {
    return static_cast<std::size_t>(heads()) * classes * hidden();
  }
  std::size_t head_b_size() const { return static_cast<std::size_t>(heads()) * classes; }
  std::size_t theta_size() const {
    return w_size() + u_size() + b_size() + head_w_size() + head_b_size();
  }
  std::size_t off_u() const { return w_size(); }
  std::size_t off_b() const { return off_u() + u_size(); }
  std::size_t off_hw() const { return off_b() + b_size(); }
  std::size_t off_hb() const { return off_hw() + head_w_size(); }
};

struct TrainMetrics {
  std::vector<double> train_loss_per_epoch;  // evaluated after each epoch
  double final_train_loss = 0.0;
  double final_valid_loss = 0.0;
  double train_accuracy = 0.0;               // fraction of (record, head) hits
  double valid_accuracy = 0.0;
  std::vector<double> per_head_accuracy;     // on the validation split
  double final_learning_rate = 0.0;
};

struct TrainResult {
  ClassifierModel model;
  TrainMetrics metrics;
};

namespace nn {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Normalized frame sequence for one record: frame_t = [x..., demand of each
// platform in segment t].
inline std::vector<std::vector<double>> make_frames(const ClassifierModel& m,
                                                    const std::vector<float>& feat) {
  const int D = m.input_dim(), T = m.seq_len;
  std::vector<double> z(feat.size());
  for (std::size_t i = 0; i < feat.size(); ++i)
    z[i] = (static_cast<double>(feat[i]) - m.feat_mean[i]) / m.feat_scale[i];
  std::vector<std::vector<double>> frames(static_cast<std::size_t>(T),
                                          std::vector<double>(static_cast<std::size_t>(D)));
  for (int t = 0; t < T; ++t) {
    for (int d = 0; d < m.x_dim; ++d) frames[t][d] = z[static_cast<std::size_t>(d)];
    for (int p = 0; p < m.n_platforms; ++p)
      frames[t][m.x_dim + p] = z[static_cast<std::size_t>(m.x_dim + p * T + t)];
  }
  return frames;
}

struct ForwardCache {
  std::vector<std::vector<double>> frames, gate_i, gate_f, gate_g, gate_o, c, tanh_c, h;
  std::vector<double> h_final;                 // after dropout scaling
  std::vector<std::vector<double>> logits;     // per head
  std::vector<std::vector<double>> softmax;
};

// Runs the cell over the frames; `drop_scale` (empty = no dropout) multiplies
// the final hidden vector elementwise.
inline void forward(const ClassifierModel& m, const std::vector<float>& feat,
                    const std::vector<double>& drop_scale, ForwardCache& fc) {
  const int H = m.hidden(), D = m.input_dim(), T = m.seq_len;
  fc.frames = make_frames(m, feat);
  auto zeros = [&](int n) { return std::vector<double>(static_cast<std::size_t>(n), 0.0); };
  fc.gate_i.assign(T, zeros(H));
  fc.gate_f.assign(T, zeros(H));
  fc.gate_g.assign(T, zeros(H));
  fc.gate_o.assign(T, zeros(H));
  fc.c.assign(T, zeros(H));
  fc.tanh_c.assign(T, zeros(H));
  fc.h.assign(T, zeros(H));
  const double* W = m.theta.data();
  const double* U = m.theta.data() + m.off_u();
  const double* b = m.theta.data() + m.off_b();
  std::vector<double> pre(static_cast<std::size_t>(4 * H));
  for (int t = 0; t < T; ++t) {
    const std::vector<double>& x = fc.frames[t];
    const std::vector<double>* h_prev = t > 0 ? &fc.h[t - 1] : nullptr;
    for (int g = 0; g < 4; ++g)
      for (int i = 0; i < H; ++i) {
        const int rowidx = g * H + i;
        double acc = b[rowidx];
        const double* wrow = W + static_cast<std::size_t>(rowidx) * D;
        for (int d = 0; d < D; ++d) acc += wrow[d] * x[d];
        if (h_prev) {
          const double* urow = U + static_cast<std::size_t>(rowidx) * H;
          for (int k = 0; k < H; ++k) acc += urow[k] * (*h_prev)[k];
        }
        pre[rowidx] = acc;
      }
    for (int i = 0; i < H; ++i) {
      fc.gate_i[t][i] = sigmoid(pre[0 * H + i]);
      fc.gate_f[t][i] = sigmoid(pre[1 * H + i]);
      fc.gate_g[t][i] = std::tanh(pre[2 * H + i]);
      fc.gate_o[t][i] = sigmoid(pre[3 * H + i]);
      double c_prev = t > 0 ? fc.c[t - 1][i] : 0.0;
      fc.c[t][i] = fc.gate_f[t][i] * c_prev + fc.gate_i[t][i] * fc.gate_g[t][i];
      fc.tanh_c[t][i] = std::tanh(fc.c[t][i]);
      fc.h[t][i] = fc.gate_o[t][i] * fc.tanh_c[t][i];
    }
  }
  fc.h_final = fc.h[T - 1];
  if (!drop_scale.empty())
    for (int i = 0; i < H; ++i) fc.h_final[i] *= drop_scale[i];
  const double* hw = m.theta.data() + m.off_hw();
  const double* hb = m.theta.data() + m.off_hb();
  const int K = m.heads(), C = m.classes;
  fc.logits.assign(K, zeros(C));
  fc.softmax.assign(K, zeros(C));
  for (int k = 0; k < K; ++k) {
    double maxv = -1e300;
    for (int c = 0; c < C; ++c) {
      double acc = hb[k * C + c];
      const double* row = hw + static_cast<std::size_t>(k * C + c) * H;
      for (int i = 0; i < H; ++i) acc += row[i] * fc.h_final[i];
      fc.logits[k][c] = acc;
      maxv = std::max(maxv, acc);
    }
    double z = 0.0;
    for (int c = 0; c < C; ++c) z += std::exp(fc.logits[k][c] - maxv);
    for (int c = 0; c < C; ++c) fc.softmax[k][c] = std::exp(fc.logits[k][c] - maxv) / z;
  }
}

inline double loss_from_cache(const ForwardCache& fc, const std::vector<std::uint8_t>& labels) {
  double loss = 0.0;
  for (std::size_t k = 0; k < fc.softmax.size(); ++k)
    loss -= std::log(std::max(fc.softmax[k][labels[k]], 1e-300));
  return loss;
}

inline double record_loss(const ClassifierModel& m, const std::vector<float>& feat,
                          const std::vector<std::uint8_t>& labels) {
  ForwardCache fc;
  forward(m, feat, {}, fc);
  return loss_from_cache(fc, labels);
}

// Backpropagation through time; adds this record's gradient into `grad`.
inline double record_loss_and_grad(const ClassifierModel& m, const std::vector<float>& feat,
                                   const std::vector<std::uint8_t>& labels,
                                   const std::vector<double>& drop_scale,
                                   std::vector<double>& grad) {
  const int H = m.hidden(), D = m.input_dim(), T = m.seq_len, K = m.heads(), C = m.classes;
  ForwardCache fc;
  forward(m, feat, drop_scale, fc);
  double loss = loss_from_cache(fc, labels);

  const double* hw = m.theta.data() + m.off_hw();
  double* g_hw = grad.data() + m.off_hw();
  double* g_hb = grad.data() + m.off_hb();
  std::vector<double> dh_final(static_cast<std::size_t>(H), 0.0);
  for (int k = 0; k < K; ++k) {
    for (int c = 0; c < C; ++c) {
      double dlogit = fc.softmax[k][c] - (labels[k] == c ? 1.0 : 0.0);
      if (dlogit == 0.0) continue;
      g_hb[k * C + c] += dlogit;
      double* gw_row = g_hw + static_cast<std::size_t>(k * C + c) * H;
      const double* w_row = hw + static_cast<std::size_t>(k * C + c) * H;
      for (int i = 0; i < H; ++i) {
        gw_row[i] += dlogit * fc.h_final[i];
        dh_final[i] += dlogit * w_row[i];
      }
    }
  }
  std::vector<double> dh(static_cast<std::size_t>(H));
  for (int i = 0; i < H; ++i)
    dh[i] = drop_scale.empty() ? dh_final[i] : dh_final[i] * drop_scale[i];

  const double* U = m.theta.data() + m.off_u();
  double* g_w = grad.data();
  double* g_u = grad.data() + m.off_u();
  double* g_b = grad.data() + m.off_b();
  std::vector<double> dc(static_cast<std::size_t>(H), 0.0);
  std::vector<double> dpre(static_cast<std::size_t>(4 * H));
  for (int t = T - 1; t >= 0; --t) {
    for (int i = 0; i < H; ++i) {
      double o = fc.gate_o[t][i], tc = fc.tanh_c[t][i];
      double do_ = dh[i] * tc;
      dc[i] += dh[i] * o * (1.0 - tc * tc);
      double ig = fc.gate_i[t][i], fg = fc.gate_f[t][i], gg = fc.gate_g[t][i];
      double c_prev = t > 0 ? fc.c[t - 1][i] : 0.0;
      double di = dc[i] * gg;
      double df = dc[i] * c_prev;
      double dg = dc[i] * ig;
      dpre[0 * H + i] = di * ig * (1.0 - ig);
      dpre[1 * H + i] = df * fg * (1.0 - fg);
      dpre[2 * H + i] = dg * (1.0 - gg * gg);
      dpre[3 * H + i] = do_ * o * (1.0 - o);
      dc[i] *= fg;  // becomes dc_{t-1}
    }
    const std::vector<double>& x = fc.frames[t];
    const std::vector<double>* h_prev = t > 0 ? &fc.h[t - 1] : nullptr;
    for (int row = 0; row < 4 * H; ++row) {
      double dp = dpre[row];
      if (dp == 0.0) continue;
      g_b[row] += dp;
      double* gw_row = g_w + static_cast<std::size_t>(row) * D;
      for (int d = 0; d < D; ++d) gw_row[d] += dp * x[d];
      if (h_prev) {
        double* gu_row = g_u + static_cast<std::size_t>(row) * H;
        for (int k = 0; k < H; ++k) gu_row[k] += dp * (*h_prev)[k];
      }
    }
    if (t > 0) {
      for (int i = 0; i < H; ++i) dh[i] = 0.0;
      for (int row = 0; row < 4 * H; ++row) {
        double dp = dpre[row];
        if (dp == 0.0) continue;
        const double* u_row = U + static_cast<std::size_t>(row) * H;
        for (int i = 0; i < H; ++i) dh[i] += dp * u_row[i];
      }
    }
  }
  return loss;
}

}  // namespace nn

// Mean loss over a set of records, dropout off.
inline double dataset_loss(const ClassifierModel& m, const Dataset& ds,
                           const std::vector<std::uint32_t>& indices) {
  if (indices.empty()) return 0.0;
  double total = 0.0;
  for (std::uint32_t i : indices) total += nn::record_loss(m, ds.features[i], ds.labels[i]);
  return total / static_cast<double>(indices.size());
}

// Fraction of (record, head) pairs whose unmasked argmax matches the label;
// `per_head`, when given, receives one accuracy per head.
inline double dataset_accuracy(const ClassifierModel& m, const Dataset& ds,
                               const std::vector<std::uint32_t>& indices,
                               std::vector<double>* per_head = nullptr) {
  if (indices.empty()) return 0.0;
  std::vector<std::int64_t> hit(static_cast<std::size_t>(m.heads()), 0);
  nn::ForwardCache fc;
  for (std::uint32_t i : indices) {
    nn::forward(m, ds.features[i], {}, fc);
    for (int k = 0; k < m.heads(); ++k) {
      int best = 0;
      for (int c = 1; c < m.classes; ++c)
        if (fc.logits[k][c] > fc.logits[k][best]) best = c;
      if (best == ds.labels[i][k]) ++hit[k];
    }
  }
  double total = 0.0;
  if (per_head) per_head->assign(static_cast<std::size_t>(m.heads()), 0.0);
  for (int k = 0; k < m.heads(); ++k) {
    double acc = static_cast<double>(hit[k]) / static_cast<double>(indices.size());
    if (per_head) (*per_head)[k] = acc;
    total += acc;
  }
  return total / static_cast<double>(m.heads());
}

inline ClassifierModel init_model(const Dataset& ds, const HyperParams& params) {
  if (ds.size() == 0) throw std::invalid_argument("dataset is empty");
  if (params.learning_rate <= 0) throw std::invalid_argument("learning rate must be positive");
  if (params.hidden_size < 1) throw std::invalid_argument("hidden size must be at least 1");
  if (params.dropout < 0 || params.dropout >= 1)
    throw std::invalid_argument("dropout must lie in [0,1)");
  ClassifierModel m;
  m.params = params;
  m.x_dim = ds.x_dim;
  m.n_platforms = ds.n_platforms;
  m.seq_len = ds.segments;
  m.classes = ds.classes;
  m.units_min = ds.units_min;
  m.horizon = 0;       // head shape is set by train()
  m.decided_routes = 0;
  m.feat_mean.assign(static_cast<std::size_t>(ds.feature_dim), 0.0);
  m.feat_scale.assign(static_cast<std::size_t>(ds.feature_dim), 1.0);
  return m;
}

// Trains one classifier. Head shape: the dataset's `heads` labels are laid
// out route-major over `horizon` cycles.
inline TrainResult train(const Dataset& ds, const HyperParams& params, int decided_routes,
                         int horizon) {
  if (decided_routes * horizon != ds.heads)
    throw std::invalid_argument("decided_routes * horizon must equal dataset heads");
  ClassifierModel m = init_model(ds, params);
  m.decided_routes = decided_routes;
  m.horizon = horizon;
  if (m.feature_dim() != ds.feature_dim)
    throw std::invalid_argument("dataset feature layout does not match x_dim + platforms * segments");

  std::vector<std::uint32_t> train_idx = ds.train_indices;
  std::vector<std::uint32_t> valid_idx = ds.valid_indices;
  if (train_idx.empty()) {
    train_idx.resize(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) train_idx[i] = static_cast<std::uint32_t>(i);
  }

  // feature statistics over the training split
  const std::size_t F = static_cast<std::size_t>(ds.feature_dim);
  for (std::size_t f = 0; f < F; ++f) {
    double mean = 0.0;
    for (std::uint32_t i : train_idx) mean += ds.features[i][f];
    mean /= static_cast<double>(train_idx.size());
    double var = 0.0;
    for (std::uint32_t i : train_idx) {
      double dv = ds.features[i][f] - mean;
      var += dv * dv;
    }
    var /= static_cast<double>(train_idx.size());
    m.feat_mean[f] = mean;
    m.feat_scale[f] = std::max(std::sqrt(var), 1e-8);
  }

  std::mt19937_64 rng = make_rng(params.seed, 0x7a11);
  std::normal_distribution<double> init(0.0, 0.1);
  m.theta.resize(m.theta_size());
  for (auto& w : m.theta) w = init(rng);
  for (int i = 0; i < m.hidden(); ++i) m.theta[m.off_b() + m.hidden() + i] = 1.0;  // forget bias

  TrainMetrics metrics;
  double lr = params.learning_rate;
  double best_loss = dataset_loss(m, ds, train_idx);
  std::vector<double> snapshot = m.theta;
  std::vector<double> grad(m.theta_size(), 0.0);
  std::vector<double> drop_scale;
  const int batch = std::max(1, params.batch_size);

  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    for (std::size_t start = 0; start < train_idx.size(); start += batch) {
      std::size_t end = std::min(train_idx.size(), start + batch);
      std::fill(grad.begin(), grad.end(), 0.0);
      double batch_loss = 0.0;
      for (std::size_t s = start; s < end; ++s) {
        std::uint32_t i = train_idx[s];
        drop_scale.clear();
        if (params.dropout > 0.0) {
          drop_scale.resize(static_cast<std::size_t>(m.hidden()));
          std::bernoulli_distribution keep(1.0 - params.dropout);
          for (auto& v : drop_scale) v = keep(rng) ? 1.0 / (1.0 - params.dropout) : 0.0;
        }
        batch_loss += nn::record_loss_and_grad(m, ds.features[i], ds.labels[i], drop_scale, grad);
      }
      if (!std::isfinite(batch_loss))
        throw ModelError("training diverged: non-finite loss in epoch " + std::to_string(epoch));
      const double scale = lr / static_cast<double>(end - start);
      for (std::size_t w = 0; w < m.theta.size(); ++w) m.theta[w] -= scale * grad[w];
    }
    double epoch_loss = dataset_loss(m, ds, train_idx);
    if (!std::isfinite(epoch_loss))
      throw ModelError("training diverged: non-finite loss in epoch " + std::to_string(epoch));
    if (params.lr_schedule) {
      if (epoch_loss > best_loss) {
        // reject the epoch and retry smaller; keeps the loss curve monotone
        m.theta = snapshot;
        lr *= 0.5;
        epoch_loss = best_loss;
      } else {
        best_loss = epoch_loss;
        snapshot = m.theta;
      }
    }
    metrics.train_loss_per_epoch.push_back(epoch_loss);
  }
  metrics.final_train_loss = dataset_loss(m, ds, train_idx);
  metrics.final_valid_loss = valid_idx.empty() ? metrics.final_train_loss
                                               : dataset_loss(m, ds, valid_idx);
  metrics.train_accuracy = dataset_accuracy(m, ds, train_idx);
  const auto& acc_idx = valid_idx.empty() ? train_idx : valid_idx;
  metrics.valid_accuracy = dataset_accuracy(m, ds, acc_idx, &metrics.per_head_accuracy);
  metrics.final_learning_rate = lr;
  TrainResult out;
  out.model = std::move(m);
  out.metrics = std::move(metrics);
  return out;
}

// Argmax plan from the model. With mask_outputs, compositions that would
// drive a depot ledger negative or above capacity -- assuming every other
// route keeps its in-service composition -- are excluded before the argmax.
// Ties go to the smaller composition. A mask that would exclude every class
// is dropped for that head.
inline DiscretePlan predict(const ClassifierModel& m, const LearningState& lstate,
                            const SystemState& mask_context, const LineNetwork& net) {
  std::vector<double> flat = lstate.flat();
  if (static_cast<int>(flat.size()) != m.feature_dim())
    throw std::invalid_argument("learning state dimension does not match the model");
  std::vector<float> feat(flat.begin(), flat.end());
  nn::ForwardCache fc;
  nn::forward(m, feat, {}, fc);

  const auto routes = net.routes();
  std::vector<int> decided;
  for (std::size_t r = 0; r < routes.size(); ++r)
    if (routes[r].origin_depot >= 0) decided.push_back(static_cast<int>(r));
  if (static_cast<int>(decided.size()) != m.decided_routes)
    throw std::invalid_argument("network decision layout does not match the model");

  DiscretePlan plan;
  plan.compositions.resize(routes.size());
  for (std::size_t r = 0; r < routes.size(); ++r)
    plan.compositions[r].assign(static_cast<std::size_t>(m.horizon),
                                mask_context.route_composition[r]);

  for (int dr = 0; dr < m.decided_routes; ++dr) {
    const int r = decided[static_cast<std::size_t>(dr)];
    const int depot = routes[static_cast<std::size_t>(r)].origin_depot;
    double arriving = 0.0, other_departing = 0.0;
    for (std::size_t r2 = 0; r2 < routes.size(); ++r2) {
      if (routes[r2].terminus_depot == depot)
        arriving += mask_context.route_composition[r2];
      if (routes[r2].origin_depot == depot && static_cast<int>(r2) != r)
        other_departing += mask_context.route_composition[r2];
    }
    double units = static_cast<double>(mask_context.depot_units[static_cast<std::size_t>(depot)]);
    const double units_max = static_cast<double>(net.depots[static_cast<std::size_t>(depot)].units_max);
    for (int j = 0; j < m.horizon; ++j) {
      const int head = dr * m.horizon + j;
      // ledger after this cycle: units + arriving - other_departing - ell
      const double slack = units + arriving - other_departing;
      auto allowed = [&](int cls) {
        if (!m.params.mask_outputs) return true;
        double ell = static_cast<double>(m.units_min + cls);
        double next = slack - ell;
        return next >= -1e-9 && next <= units_max + 1e-9;
      };
      bool any = false;
      for (int c = 0; c < m.classes && !any; ++c) any = allowed(c);
      int best = -1;
      for (int c = 0; c < m.classes; ++c) {
        if (any && !allowed(c)) continue;
        if (best < 0 || fc.logits[head][c] > fc.logits[head][best]) best = c;
      }
      const int ell = m.units_min + best;
      plan.compositions[static_cast<std::size_t>(r)][static_cast<std::size_t>(j)] = ell;
      units = std::min(std::max(slack - ell, 0.0), units_max);
    }
  }
  return plan;
}

// --- hyperparameter grids ---------------------------------------------------

inline std::vector<HyperParams> hyperparameter_grid(
    const std::vector<double>& learning_rates, const std::vector<int>& hidden_sizes,
    const std::vector<double>& dropouts, const std::vector<bool>& maskings,
    const std::vector<bool>& schedules, int epochs, int batch_size, std::uint64_t seed_base) {
  std::vector<HyperParams> grid;
  for (double lr : learning_rates)
    for (int h : hidden_sizes)
      for (double d : dropouts)
        for (bool mask : maskings)
          for (bool sched : schedules) {
            HyperParams p;
            p.learning_rate = lr;
            p.hidden_size = h;
            p.dropout = d;
            p.mask_outputs = mask;
            p.lr_schedule = sched;
            p.epochs = epochs;
            p.batch_size = batch_size;
            p.seed = seed_base + grid.size();
            grid.push_back(p);
          }
  return grid;
}

// 2 x 4 x 2 x 2 x 2 = 64 configurations.
inline std::vector<HyperParams> default_hyperparameter_grid(int epochs = 60,
                                                            std::uint64_t seed_base = 1000) {
  return hyperparameter_grid({1e-2, 1e-3}, {16, 32, 64, 128}, {0.0, 0.2}, {true, false},
                             {true, false}, epochs, 32, seed_base);
}

// --- serialization -----------------------------------------------------------
// magic "RMNN" | u32 version | u64 header length | header JSON |
// theta f64 | feat_mean f64 | feat_scale f64 | fnv1a64 checksum

inline std::string model_to_bytes(const ClassifierModel& m) {
  nlohmann::json header;
  header["learning_rate"] = m.params.learning_rate;
  header["hidden_size"] = m.params.hidden_size;
  header["dropout"] = m.params.dropout;
  header["mask_outputs"] = m.params.mask_outputs;
  header["lr_schedule"] = m.params.lr_schedule;
  header["epochs"] = m.params.epochs;
  header["batch_size"] = m.params.batch_size;
  header["seed"] = m.params.seed;
  header["x_dim"] = m.x_dim;
  header["n_platforms"] = m.n_platforms;
  header["seq_len"] = m.seq_len;
  header["decided_routes"] = m.decided_routes;
  header["horizon"] = m.horizon;
  header["classes"] = m.classes;
  header["units_min"] = m.units_min;
  std::string htext = header.dump();
  std::string out = "RMNN";
  std::uint32_t version = 1;
  detail::put_raw(out, &version, 1);
  std::uint64_t hlen = htext.size();
  detail::put_raw(out, &hlen, 1);
  out += htext;
  detail::put_raw(out, m.theta.data(), m.theta.size());
  detail::put_raw(out, m.feat_mean.data(), m.feat_mean.size());
  detail::put_raw(out, m.feat_scale.data(), m.feat_scale.size());
  std::uint64_t sum = fnv1a64(out.data() + 4, out.size() - 4);
  detail::put_raw(out, &sum, 1);
  return out;
}

inline ClassifierModel model_from_bytes(const std::string& in) {
  if (in.size() < 4 + sizeof(std::uint32_t) + 2 * sizeof(std::uint64_t) ||
      in.compare(0, 4, "RMNN") != 0)
    throw FileFormatError("not a classifier model file");
  std::uint64_t stored;
  std::memcpy(&stored, in.data() + in.size() - sizeof(std::uint64_t), sizeof(std::uint64_t));
  if (fnv1a64(in.data() + 4, in.size() - 4 - sizeof(std::uint64_t)) != stored)
    throw FileFormatError("model checksum mismatch (corrupt or truncated file)");
  std::size_t pos = 4;
  std::uint32_t version = 0;
  detail::get_raw(in, pos, &version, 1);
  if (version != 1) throw FileFormatError("unsupported model version");
  std::uint64_t hlen = 0;
  detail::get_raw(in, pos, &hlen, 1);
  if (pos + hlen > in.size()) throw FileFormatError("file truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(in.substr(pos, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw FileFormatError(std::string("model header malformed: ") + e.what());
  }
  pos += hlen;
  ClassifierModel m;
  m.params.learning_rate = header.at("learning_rate").get<double>();
  m.params.hidden_size = header.at("hidden_size").get<int>();
  m.params.dropout = header.at("dropout").get<double>();
  m.params.mask_outputs = header.at("mask_outputs").get<bool>();
  m.params.lr_schedule = header.at("lr_schedule").get<bool>();
  m.params.epochs = header.at("epochs").get<int>();
  m.params.batch_size = header.at("batch_size").get<int>();
  m.params.seed = header.at("seed").get<std::uint64_t>();
  m.x_dim = header.at("x_dim").get<int>();
  m.n_platforms = header.at("n_platforms").get<int>();
  m.seq_len = header.at("seq_len").get<int>();
  m.decided_routes = header.at("decided_routes").get<int>();
  m.horizon = header.at("horizon").get<int>();
  m.classes = header.at("classes").get<int>();
  m.units_min = header.at("units_min").get<int>();
  m.theta.resize(m.theta_size());
  detail::get_raw(in, pos, m.theta.data(), m.theta.size());
  m.feat_mean.resize(static_cast<std::size_t>(m.feature_dim()));
  detail::get_raw(in, pos, m.feat_mean.data(), m.feat_mean.size());
  m.feat_scale.resize(static_cast<std::size_t>(m.feature_dim()));
  detail::get_raw(in, pos, m.feat_scale.data(), m.feat_scale.size());
  if (pos + sizeof(std::uint64_t) != in.size())
    throw FileFormatError("model file has trailing or missing bytes");
  return m;
}

inline void save_model(const ClassifierModel& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileFormatError("cannot open for writing: " + path);
  std::string bytes = model_to_bytes(m);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline ClassifierModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileFormatError("cannot open model file: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return model_from_bytes(bytes);
}

}  // namespace railmpc
