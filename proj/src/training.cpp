#include "heartinv/training.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "heartinv/csv.hpp"

namespace heartinv {

using ad::Var;

const char* backend_name(DerivativeBackend b) {
    switch (b) {
        case DerivativeBackend::ND: return "nd";
        case DerivativeBackend::AD: return "ad";
        case DerivativeBackend::NDSpatialOnly: return "nd-spatial";
    }
    return "?";
}

DerivativeBackend parse_backend(const std::string& name) {
    if (name == "nd") return DerivativeBackend::ND;
    if (name == "ad") return DerivativeBackend::AD;
    if (name == "nd-spatial") return DerivativeBackend::NDSpatialOnly;
    throw Error("unknown derivative backend '" + name + "'");
}

void TrainConfig::validate() const {
    if (!(lambda >= 0.0)) throw Error("lambda must be >= 0");
    if (collocation_count < 1) throw Error("collocation count must be >= 1");
    if (collocation_batch < 1) throw Error("collocation batch must be >= 1");
    if (iterations < 1) throw Error("iterations must be >= 1");
    if (time_batch < 1) throw Error("time batch must be >= 1");
    if (!(learning_rate > 0.0)) throw Error("learning rate must be positive");
    if (log_every < 1) throw Error("log interval must be >= 1");
    ap.validate();
}

Problem::Problem(TriMesh mesh_, TemporalGrid grid_, TransferModel tm_, Eigen::MatrixXd y_)
    : mesh(std::move(mesh_)),
      adj(build_adjacency(mesh)),
      lap(adj),
      normals(vertex_normals(mesh)),
      grid(grid_),
      tm(std::move(tm_)),
      y(std::move(y_)) {
    if (tm.num_nodes() != nodes()) throw Error("transfer matrix columns do not match the mesh");
    if (y.rows() != tm.num_sensors()) throw Error("observation rows do not match the sensor count");
    if (y.cols() != grid.samples) throw Error("observation columns do not match the temporal grid");
}

Normalization Problem::normalization() const { return Normalization::from_mesh(mesh, grid.duration()); }

// ---------------------------------------------------------------------------

int EvaluationSet::add(LatticePoint p) {
    const long long key = (static_cast<long long>(p.node) << 32) | static_cast<unsigned>(p.time);
    auto [it, inserted] = index_.try_emplace(key, static_cast<int>(points_.size()));
    if (inserted) points_.push_back(p);
    return it->second;
}

Eigen::MatrixXd EvaluationSet::inputs(const Problem& problem, const Normalization& norm) const {
    Eigen::MatrixXd in(4, static_cast<Eigen::Index>(points_.size()));
    for (std::size_t k = 0; k < points_.size(); ++k) {
        const auto& p = points_[k];
        in.col(static_cast<Eigen::Index>(k)) =
            norm.apply(problem.mesh.vertices[static_cast<std::size_t>(p.node)], problem.grid.time(p.time));
    }
    return in;
}

Eigen::MatrixXd lattice_coordinates(const Problem& problem, std::span<const LatticePoint> pts) {
    Eigen::MatrixXd raw(4, static_cast<Eigen::Index>(pts.size()));
    for (std::size_t k = 0; k < pts.size(); ++k) {
        const auto c = static_cast<Eigen::Index>(k);
        raw.block<3, 1>(0, c) = problem.mesh.vertices[static_cast<std::size_t>(pts[k].node)];
        raw(3, c) = problem.grid.time(pts[k].time);
    }
    return raw;
}

NdPlan plan_nd(const Problem& problem, std::span<const LatticePoint> collocation, EvaluationSet& eval,
               bool with_time_derivative) {
    using Triplet = Eigen::Triplet<double>;
    std::vector<Triplet> center, lap, dt;
    const auto& L = problem.lap.matrix();
    const int samples = problem.samples();
    const double denom = 12.0 * problem.grid.step;

    for (std::size_t k = 0; k < collocation.size(); ++k) {
        const int row = static_cast<int>(k);
        const auto [node, time] = collocation[k];
        if (node < 0 || node >= problem.nodes() || time < 0 || time >= samples) {
            throw Error("collocation point outside the lattice");
        }
        if (problem.adj.degree(static_cast<std::size_t>(node)) < 2) {
            throw Error("collocation node " + std::to_string(node) + " has fewer than two neighbors");
        }
        center.emplace_back(row, eval.add({node, time}), 1.0);
        for (ad::SparseMap::InnerIterator it(L, node); it; ++it) {
            lap.emplace_back(row, eval.add({static_cast<int>(it.col()), time}), it.value());
        }
        if (with_time_derivative) {
            const auto st = temporal_stencil(time, samples);
            for (int m = 0; m < 5; ++m) {
                if (st.weights[static_cast<std::size_t>(m)] == 0.0) continue;
                dt.emplace_back(row, eval.add({node, st.first + m}), st.weights[static_cast<std::size_t>(m)] / denom);
            }
        }
    }

    const auto rows = static_cast<Eigen::Index>(collocation.size());
    const auto cols = static_cast<Eigen::Index>(eval.size());
    auto build = [&](const std::vector<Triplet>& entries) {
        auto m = std::make_shared<ad::SparseMap>(rows, cols);
        m->setFromTriplets(entries.begin(), entries.end());
        return std::shared_ptr<const ad::SparseMap>(std::move(m));
    };
    NdPlan plan;
    plan.center = build(center);
    plan.laplacian = build(lap);
    if (with_time_derivative) plan.time_derivative = build(dt);
    return plan;
}

ResidualSet ep_residual_terms(Var u, Var v, Var u_t, Var v_t, Var lap_u, const APParams& p) {
    using namespace ad;
    // k u (1 - u)(u - a)
    const Var excitation = scale(mul(mul(u, shift(neg(u), 1.0)), shift(u, -p.a)), p.k);
    const Var r_u = add(sub(sub(u_t, scale(lap_u, p.D)), excitation), mul(u, v));

    // xi = e0 + mu1 v / (u + mu2)
    const Var xi = shift(scale(div(v, shift(u, p.mu2)), p.mu1), p.e0);
    // -v - k u (u - a - 1)
    const Var recovery = sub(neg(v), scale(mul(u, shift(u, -p.a - 1.0)), p.k));
    const Var r_v = sub(v_t, mul(xi, recovery));
    return {r_u, r_v, std::nullopt};
}

ResidualSet nd_residuals_from_values(Var u_values, Var v_values, const NdPlan& plan, const APParams& p) {
    if (!plan.time_derivative) throw Error("ND plan was built without the temporal stencil");
    const Var u = ad::linear_map(u_values, plan.center);
    const Var v = ad::linear_map(v_values, plan.center);
    const Var u_t = ad::linear_map(u_values, plan.time_derivative);
    const Var v_t = ad::linear_map(v_values, plan.time_derivative);
    const Var lap_u = ad::linear_map(u_values, plan.laplacian);
    return ep_residual_terms(u, v, u_t, v_t, lap_u, p);
}

Var ep_loss(const ResidualSet& r) {
    if (r.size() == 0) throw Error("empty residual set");
    Var loss = ad::add(ad::mean(ad::square(r.r_u)), ad::mean(ad::square(r.r_v)));
    if (r.r_b) loss = ad::add(loss, ad::mean(ad::square(*r.r_b)));
    return loss;
}

Var data_loss_from_values(Var u_nodes_by_time, const Eigen::MatrixXd& R, const Eigen::MatrixXd& y_batch) {
    auto& tape = *u_nodes_by_time.tape();
    if (R.cols() != u_nodes_by_time.rows()) throw Error("data loss: R columns do not match node count");
    if (y_batch.rows() != R.rows() || y_batch.cols() != u_nodes_by_time.cols()) {
        throw Error("data loss: observation batch has the wrong shape");
    }
    const Var y_hat = ad::matmul(tape.constant(R), u_nodes_by_time);
    return ad::mean(ad::square(ad::sub(tape.constant(y_batch), y_hat)));
}

namespace {

Eigen::MatrixXd gather_columns(const Eigen::MatrixXd& m, std::span<const int> cols) {
    Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = m.col(cols[k]);
    return out;
}

void add_data_points(const Problem& problem, std::span<const int> time_batch, EvaluationSet& eval) {
    for (int t : time_batch) {
        if (t < 0 || t >= problem.samples()) throw Error("time index " + std::to_string(t) + " outside the grid");
        for (int v = 0; v < problem.nodes(); ++v) eval.add({v, t});
    }
}

}  // namespace

Var data_loss(ad::Tape& tape, const NetworkParams& params, const ParamVars& vars, const Problem& problem,
              std::span<const int> time_batch) {
    EvaluationSet eval;
    add_data_points(problem, time_batch, eval);
    const auto nv = problem.nodes();
    const auto nb = static_cast<Eigen::Index>(time_batch.size());
    if (static_cast<Eigen::Index>(eval.size()) != nv * nb) throw Error("data loss needs distinct time indices");
    const Var out = network_forward(tape, params, vars, tape.constant(eval.inputs(problem, params.norm)));
    const Var u = ad::reshape(ad::row(out, 0), nv, nb);
    return data_loss_from_values(u, problem.tm.R, gather_columns(problem.y, time_batch));
}

ResidualSet ep_residuals_nd(ad::Tape& tape, const NetworkParams& params, const ParamVars& vars,
                            const Problem& problem, std::span<const LatticePoint> collocation, const APParams& p) {
    EvaluationSet eval;
    const NdPlan plan = plan_nd(problem, collocation, eval);
    const Var out = network_forward(tape, params, vars, tape.constant(eval.inputs(problem, params.norm)));
    return nd_residuals_from_values(ad::row(out, 0), ad::row(out, 1), plan, p);
}

ResidualSet ep_residuals_ad(ad::Tape& tape, const ModelFn& model, const Eigen::MatrixXd& raw_points,
                            const Normalization& norm, const APParams& p,
                            const std::optional<Eigen::MatrixXd>& normals) {
    if (raw_points.rows() != 4) throw Error("AD residual points must have rows (x, y, z, t)");
    const Eigen::Index n = raw_points.cols();
    Eigen::MatrixXd inputs(4, n);
    for (Eigen::Index c = 0; c < n; ++c) {
        inputs.col(c) = norm.apply(raw_points.block<3, 1>(0, c), raw_points(3, c));
    }
    const Eigen::Vector4d s = norm.scales();

    const Var x = tape.constant(std::move(inputs));
    const Var out = model(tape, x);
    const Var u = ad::row(out, 0);
    const Var v = ad::row(out, 1);

    // A direction of s_k e_k in normalized inputs is e_k in raw coordinates.
    auto axis = [&](int k) {
        Eigen::MatrixXd d = Eigen::MatrixXd::Zero(4, 1);
        d(k, 0) = s[k];
        return d;
    };

    const Var d_time = ad::directional_derivative(out, x, axis(3));
    const Var u_t = ad::row(d_time, 0);
    const Var v_t = ad::row(d_time, 1);

    std::optional<Var> lap_u;
    for (int k = 0; k < 3; ++k) {
        const Var first = ad::directional_derivative(u, x, axis(k));
        const Var second = ad::directional_derivative(first, x, axis(k));
        lap_u = lap_u ? ad::add(*lap_u, second) : second;
    }

    ResidualSet r = ep_residual_terms(u, v, u_t, v_t, *lap_u, p);
    if (normals) {
        if (normals->rows() != 3 || normals->cols() != n) throw Error("normals must be 3 x N");
        Eigen::MatrixXd dir = Eigen::MatrixXd::Zero(4, n);
        for (int k = 0; k < 3; ++k) dir.row(k) = s[k] * normals->row(k);
        r.r_b = ad::directional_derivative(u, x, dir);
    }
    return r;
}

ResidualSet ep_residuals_nd_spatial(ad::Tape& tape, const NetworkParams& params, const ParamVars& vars,
                                    const Problem& problem, std::span<const LatticePoint> collocation,
                                    const APParams& p) {
    EvaluationSet eval;
    const NdPlan plan = plan_nd(problem, collocation, eval, false);
    const Var out = network_forward(tape, params, vars, tape.constant(eval.inputs(problem, params.norm)));
    const Var u_all = ad::row(out, 0);
    const Var lap_u = ad::linear_map(u_all, plan.laplacian);

    // Time derivative from the network at the collocation points themselves.
    EvaluationSet centers;
    for (const auto& pt : collocation) centers.add(pt);
    Eigen::MatrixXd dir = Eigen::MatrixXd::Zero(4, 1);
    dir(3, 0) = params.norm.scales()[3];
    std::vector<int> col_of;
    col_of.reserve(collocation.size());
    for (const auto& pt : collocation) col_of.push_back(centers.add(pt));

    const Var xc = tape.constant(centers.inputs(problem, params.norm));
    const Var oc = network_forward(tape, params, vars, xc);
    const Var dc = ad::directional_derivative(oc, xc, dir);

    // Expand from unique centers back to collocation order.
    auto expand = std::make_shared<ad::SparseMap>(static_cast<Eigen::Index>(collocation.size()),
                                                  static_cast<Eigen::Index>(centers.size()));
    std::vector<Eigen::Triplet<double>> entries;
    for (std::size_t k = 0; k < col_of.size(); ++k) entries.emplace_back(static_cast<int>(k), col_of[k], 1.0);
    expand->setFromTriplets(entries.begin(), entries.end());
    const std::shared_ptr<const ad::SparseMap> ex = expand;

    const Var u = ad::linear_map(ad::row(oc, 0), ex);
    const Var v = ad::linear_map(ad::row(oc, 1), ex);
    const Var u_t = ad::linear_map(ad::row(dc, 0), ex);
    const Var v_t = ad::linear_map(ad::row(dc, 1), ex);
    return ep_residual_terms(u, v, u_t, v_t, lap_u, p);
}

// ---------------------------------------------------------------------------

std::string TrainHistory::csv() const {
    std::string out = "iter,total,data,ep,seconds\n";
    for (const auto& e : entries) {
        out += std::to_string(e.iteration) + "," + format_real(e.total, 17) + "," + format_real(e.data, 17) + "," +
               format_real(e.ep, 17) + "," + format_real(e.seconds, 6) + "\n";
    }
    return out;
}

bool detect_bad_init(const TrainHistory& history, double threshold, int window) {
    if (history.iterations_run < window) {
        throw Error("bad-initialization check needs " + std::to_string(window) + " iterations, history has " +
                    std::to_string(history.iterations_run));
    }
    for (const auto& e : history.entries) {
        if (e.iteration < window && e.total > threshold) return true;
    }
    return false;
}

namespace {

// First `count` entries of a seeded partial Fisher-Yates shuffle of [0, n).
std::vector<int> draw_distinct(int n, int count, std::mt19937_64& rng) {
    count = std::min(count, n);
    std::vector<int> pool(static_cast<std::size_t>(n));
    std::iota(pool.begin(), pool.end(), 0);
    for (int i = 0; i < count; ++i) {
        std::uniform_int_distribution<int> pick(i, n - 1);
        std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(rng))]);
    }
    pool.resize(static_cast<std::size_t>(count));
    return pool;
}

struct Adam {
    std::vector<double> m, v;
    long step = 0;

    void update(std::vector<double>& params, const std::vector<double>& grad, const TrainConfig& c) {
        if (m.empty()) {
            m.assign(params.size(), 0.0);
            v.assign(params.size(), 0.0);
        }
        ++step;
        const double b1t = 1.0 - std::pow(c.beta1, static_cast<double>(step));
        const double b2t = 1.0 - std::pow(c.beta2, static_cast<double>(step));
        for (std::size_t i = 0; i < params.size(); ++i) {
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * grad[i];
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
            params[i] -= c.learning_rate * (m[i] / b1t) / (std::sqrt(v[i] / b2t) + c.epsilon);
        }
    }
};

}  // namespace

std::vector<LatticePoint> sample_collocation(const Problem& problem, int count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const int samples = problem.samples();
    const int lattice = static_cast<int>(problem.nodes()) * samples;
    if (count < 1 || count > lattice) {
        throw Error("collocation count must be in [1, " + std::to_string(lattice) + "], got " + std::to_string(count));
    }
    std::vector<LatticePoint> pts;
    for (int id : draw_distinct(lattice, count, rng)) pts.push_back({id / samples, id % samples});
    return pts;
}

LossTerms assemble_loss(ad::Tape& tape, const NetworkParams& params, const ParamVars& vars, const Problem& problem,
                        const TrainConfig& config, std::span<const int> times, std::span<const LatticePoint> batch) {
    const bool need_ep = !batch.empty();
    const bool with_rb = config.use_rb();
    const auto nv = problem.nodes();
    LossTerms terms;

    if (config.backend == DerivativeBackend::ND && need_ep) {
        // One forward pass over the data points and the stencil closure.
        EvaluationSet eval;
        add_data_points(problem, times, eval);
        const NdPlan plan = plan_nd(problem, batch, eval);
        const Var out = network_forward(tape, params, vars, tape.constant(eval.inputs(problem, params.norm)));
        const Var u_all = ad::row(out, 0);
        const auto nb = static_cast<Eigen::Index>(times.size());
        const Var u_data = ad::reshape(ad::block(u_all, 0, 0, 1, nv * nb), nv, nb);
        terms.data = data_loss_from_values(u_data, problem.tm.R, gather_columns(problem.y, times));
        terms.ep = ep_loss(nd_residuals_from_values(u_all, ad::row(out, 1), plan, config.ap));
    } else {
        terms.data = data_loss(tape, params, vars, problem, times);
        if (need_ep) {
            ResidualSet r;
            if (config.backend == DerivativeBackend::AD) {
                const ModelFn model = [&](ad::Tape& t, Var in) { return network_forward(t, params, vars, in); };
                std::optional<Eigen::MatrixXd> normals;
                if (with_rb) {
                    normals = Eigen::MatrixXd(3, static_cast<Eigen::Index>(batch.size()));
                    for (std::size_t k = 0; k < batch.size(); ++k) {
                        normals->col(static_cast<Eigen::Index>(k)) =
                            problem.normals[static_cast<std::size_t>(batch[k].node)];
                    }
                }
                r = ep_residuals_ad(tape, model, lattice_coordinates(problem, batch), params.norm, config.ap, normals);
            } else if (config.backend == DerivativeBackend::NDSpatialOnly) {
                r = ep_residuals_nd_spatial(tape, params, vars, problem, batch, config.ap);
            } else {
                r = ep_residuals_nd(tape, params, vars, problem, batch, config.ap);
            }
            if (!with_rb) r.r_b.reset();
            terms.ep = ep_loss(r);
        }
    }
    terms.total = terms.ep ? ad::add(terms.data, ad::scale(*terms.ep, config.lambda)) : terms.data;
    return terms;
}

TrainResult train(const TrainConfig& config, const NetworkConfig& net_config, const Problem& problem) {
    config.validate();
#if defined(__GLIBC__)
    // Tape buffers are large and short-lived; keep them on the heap instead
    // of paying an mmap/munmap pair per allocation.
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
    const auto start = std::chrono::steady_clock::now();

    TrainResult result{init_network(net_config, problem.normalization()), {}};
    NetworkParams& params = result.params;

    std::mt19937_64 rng(config.seed);
    // Fixed collocation set for the run (resampled per step when requested).
    std::vector<LatticePoint> collocation = sample_collocation(problem, config.collocation_count, rng());

    std::vector<double> flat = params.flatten();
    Adam adam;

    for (int it = 0; it < config.iterations; ++it) {
        const bool log_now = it % config.log_every == 0 || it < config.early_window || it + 1 == config.iterations;
        const bool need_ep = config.lambda > 0.0 || log_now;

        std::vector<int> times = draw_distinct(problem.samples(), config.time_batch, rng);
        std::vector<LatticePoint> batch;
        if (need_ep) {
            if (config.resample_collocation) {
                batch = sample_collocation(problem, config.collocation_batch, rng());
            } else {
                for (int k : draw_distinct(static_cast<int>(collocation.size()), config.collocation_batch, rng)) {
                    batch.push_back(collocation[static_cast<std::size_t>(k)]);
                }
            }
        }

        ad::Tape tape;
        const ParamVars vars = bind_params(tape, params);
        const LossTerms loss = assemble_loss(tape, params, vars, problem, config, times, batch);
        const Var total = loss.total;
        const double total_value = total.scalar();
        if (!std::isfinite(total_value)) {
            throw TrainingError("non-finite loss at iteration " + std::to_string(it));
        }
        if (log_now) {
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            result.history.entries.push_back({it, total_value, loss.data.scalar(), loss.ep ? loss.ep->scalar() : 0.0, secs});
        }

        const ad::Gradients grads = tape.backward(total);
        adam.update(flat, flatten_gradients(grads, vars), config);
        params.unflatten(flat);
        result.history.iterations_run = it + 1;
    }

    result.history.bad_init =
        result.history.iterations_run >= config.early_window && detect_bad_init(result.history, 1.5, config.early_window);
    return result;
}

Eigen::MatrixXd reconstruct_field(const NetworkParams& params, const Problem& problem) {
    const auto nv = problem.nodes();
    const int samples = problem.samples();
    Eigen::MatrixXd u(nv, samples);
    Eigen::MatrixXd inputs(4, nv);
    for (int t = 0; t < samples; ++t) {
        for (Eigen::Index v = 0; v < nv; ++v) {
            inputs.col(v) = params.norm.apply(problem.mesh.vertices[static_cast<std::size_t>(v)], problem.grid.time(t));
        }
        u.col(t) = network_predict(params, inputs).row(0).transpose();
    }
    return u;
}

}  // namespace heartinv
