#include "doctest.h"

#include "chpd/errors.hpp"
#include "chpd/report.hpp"
#include "chpd/validation.hpp"
#include "test_systems.hpp"

using namespace chpd;

namespace {

struct Reference {
    SystemModel model;
    StateSpaceModel ssm;
    ConstraintFamily c;
    UncertaintyTube tube;
    CostModel costs;
    FeedbackGain gain;

    explicit Reference(int T) : model(build_reference_system({T, 3600.0})) {
        ssm = compile_state_space(model);
        c = compile_constraints(model, ssm);
        tube = compile_uncertainty_tube(model);
        costs = CostModel::from_system(model);
        gain = zero_gain(ssm);
    }
    Policy policy(const TightenMode& mode) const {
        return Policy{solve_dispatch(ssm, tighten(ssm, c, tube, gain, mode), costs, tube.center), gain};
    }
};

}  // namespace

TEST_CASE("sampling") {
    std::mt19937_64 rng(3);
    auto tube = chpd::testing::random_tube(rng, 4, 24);

    SUBCASE("zero width gives the centers") {
        auto flat = make_tube(tube.center, tube.center, tube.center);
        auto batch = sample_disturbances(flat, 5, 1, SamplingMode::uniform);
        for (int k = 0; k < 5; ++k) CHECK(batch.sample(k) == flat.center);
    }
    SUBCASE("fixed seeds reproduce") {
        auto a = sample_disturbances(tube, 10, 42, SamplingMode::uniform);
        auto b = sample_disturbances(tube, 10, 42, SamplingMode::uniform);
        auto c = sample_disturbances(tube, 10, 43, SamplingMode::uniform);
        for (int k = 0; k < 10; ++k) CHECK(a.sample(k) == b.sample(k));
        CHECK(a.sample(0) != c.sample(0));
        CHECK(a.sample(0) != a.sample(1));
    }
    SUBCASE("samples stay inside the tube") {
        for (auto mode : {SamplingMode::uniform, SamplingMode::budget, SamplingMode::vertex}) {
            auto batch = sample_disturbances(tube, 50, 9, mode, 3.0);
            for (int k = 0; k < 50; ++k) {
                Eigen::MatrixXd w = batch.sample(k);
                CHECK((w - tube.lower).minCoeff() >= 0.0);
                CHECK((tube.upper - w).minCoeff() >= 0.0);
            }
        }
    }
    SUBCASE("budget samples respect the per-channel budget") {
        auto batch = sample_disturbances(tube, 200, 5, SamplingMode::budget, 2.0);
        double worst = 0.0;
        for (int k = 0; k < 200; ++k)
            worst = std::max(worst, batch.normalized(k).rowwise().lpNorm<1>().maxCoeff());
        CHECK(worst <= 2.0 + 1e-12);
        CHECK(worst >= 1.9);
    }
    SUBCASE("vertex samples are box corners") {
        auto batch = sample_disturbances(tube, 20, 5, SamplingMode::vertex);
        CHECK(batch.normalized(0).minCoeff() == 1.0);
        CHECK(batch.normalized(1).maxCoeff() == -1.0);
        for (int k = 2; k < 20; ++k) CHECK((batch.normalized(k).array().abs() == 1.0).all());
    }
    CHECK_THROWS_AS(sample_disturbances(tube, 0, 1, SamplingMode::uniform), Error);
    CHECK_THROWS_AS(parse_sampling_mode("gaussian"), Error);
}

TEST_CASE("closed-loop simulation") {
    SUBCASE("scalar system by hand") {
        StateSpaceModel s;
        s.horizon = 2;
        s.A = Eigen::MatrixXd::Constant(1, 1, 0.9);
        s.B = Eigen::MatrixXd::Constant(1, 1, 0.5);
        s.D = Eigen::MatrixXd::Constant(1, 1, -0.2);
        s.x0 = Eigen::VectorXd::Constant(1, 1.0);
        s.outputs.horizon = 2;
        s.outputs.C = Eigen::MatrixXd::Constant(1, 1, 2.0);
        s.outputs.E = Eigen::MatrixXd::Constant(1, 1, 1.0);
        s.outputs.offset = Eigen::MatrixXd::Zero(1, 2);
        s.outputs.input_u.resize(0, 1);
        s.outputs.input_w.resize(0, 1);
        DispatchSolution nominal;
        nominal.u = Eigen::MatrixXd(1, 2);
        nominal.u << 0.3, -0.1;
        nominal.x = Eigen::MatrixXd(1, 3);
        nominal.x << 1.0, 0.8, 0.6;
        Policy p{nominal, make_gain(s, Eigen::MatrixXd::Constant(1, 1, -0.4))};
        Eigen::MatrixXd w(1, 2);
        w << 0.5, -1.0;
        auto tr = simulate(p, s, w);
        // u0 = 0.3 + (-0.4)(1 - 1) = 0.3; x1 = 0.9 + 0.15 - 0.1 = 0.95
        // u1 = -0.1 - 0.4 (0.95 - 0.8) = -0.16; x2 = 0.855 - 0.08 + 0.2 = 0.975
        CHECK(std::abs(tr.u(0, 0) - 0.3) <= 1e-12);
        CHECK(std::abs(tr.x(0, 1) - 0.95) <= 1e-12);
        CHECK(std::abs(tr.u(0, 1) + 0.16) <= 1e-12);
        CHECK(std::abs(tr.x(0, 2) - 0.975) <= 1e-12);
        CHECK(std::abs(tr.y(0, 1) - (2.0 * -0.16 - 1.0)) <= 1e-12);
    }
    SUBCASE("deviation recursion and nominal recovery") {
        std::mt19937_64 rng(17);
        auto r = chpd::testing::random_system(rng, 3, 2, 2, 3, 10, true, true);
        REQUIRE_FALSE(r.gain.is_zero());
        Policy p = chpd::testing::reference_policy(r.ssm, r.tube, r.gain);
        auto at_center = simulate(p, r.ssm, r.tube.center);
        CHECK((at_center.x - p.nominal.x).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK((at_center.u - p.nominal.u).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK((at_center.y - p.nominal.y).cwiseAbs().maxCoeff() <= 1e-10);

        auto batch = sample_disturbances(r.tube, 5, 2, SamplingMode::uniform);
        for (int k = 0; k < 5; ++k) {
            Eigen::MatrixXd w = batch.sample(k);
            auto tr = simulate(p, r.ssm, w);
            Eigen::VectorXd dev = Eigen::VectorXd::Zero(3);
            for (int t = 0; t < 10; ++t) {
                dev = r.gain.Phi * dev + r.ssm.D * (w.col(t) - r.tube.center.col(t));
                CHECK((tr.x.col(t + 1) - p.nominal.x.col(t + 1) - dev).cwiseAbs().maxCoeff() <= 1e-10);
            }
        }
    }
    SUBCASE("zero gain keeps the nominal controls") {
        std::mt19937_64 rng(18);
        auto r = chpd::testing::random_system(rng, 2, 2, 2, 2, 6, false, false);
        Policy p = chpd::testing::reference_policy(r.ssm, r.tube, r.gain);
        auto tr = simulate(p, r.ssm, sample_disturbances(r.tube, 1, 4, SamplingMode::uniform).sample(0));
        CHECK(tr.u == p.nominal.u);
    }
}

TEST_CASE("metrics on the reference system") {
    Reference ref(24);
    auto batch = sample_disturbances(ref.tube, 1000, 11, SamplingMode::uniform);
    auto box = evaluate(ref.policy(TightenMode::box()), ref.ssm, ref.c, ref.costs, batch);
    auto det = evaluate(ref.policy(TightenMode::none()), ref.ssm, ref.c, ref.costs, batch);
    CHECK(box.violation_rate == 0.0);
    CHECK(box.histogram.empty());
    CHECK(det.violation_rate > 0.5);
    CHECK(!det.histogram.empty());
    for (const auto* m : {&box, &det}) {
        CHECK(m->j_min <= m->j_exp);
        CHECK(m->j_exp <= m->j_max);
        CHECK(m->violation_rate >= 0.0);
        CHECK(m->violation_rate <= 1.0);
    }
    CHECK(box.j_nom >= det.j_nom);

    auto vertex = sample_disturbances(ref.tube, 64, 3, SamplingMode::vertex);
    CHECK(evaluate(ref.policy(TightenMode::box()), ref.ssm, ref.c, ref.costs, vertex).violation_rate == 0.0);

    auto g2 = evaluate(ref.policy(TightenMode::with_budget(2.0)), ref.ssm, ref.c, ref.costs, batch);
    auto g10 = evaluate(ref.policy(TightenMode::with_budget(10.0)), ref.ssm, ref.c, ref.costs, batch);
    CHECK(g2.violation_rate >= g10.violation_rate);
    CHECK(g2.j_nom <= g10.j_nom);

    const std::string csv = box.to_csv();
    CHECK(csv.rfind("metric,value,unit\n", 0) == 0);
    CHECK(box.to_json().find("\"violation_rate\"") != std::string::npos);
}

TEST_CASE("a single central sample realizes the nominal cost") {
    Reference ref(12);
    Policy p = ref.policy(TightenMode::box());
    ScenarioBatch one(make_tube(ref.tube.center, ref.tube.center, ref.tube.center), 1, 1, SamplingMode::uniform);
    auto m = evaluate(p, ref.ssm, ref.c, ref.costs, one);
    CHECK(m.j_exp == doctest::Approx(m.j_nom).epsilon(1e-10));
    CHECK(m.violation_rate == 0.0);
}

TEST_CASE("method comparison") {
    auto model = build_reference_system({6, 3600.0});
    BatchSpec spec;
    spec.count = 300;
    spec.seed = 4;
    auto report = compare_methods(model, {"do", "erd-box", "erd-budget:2", "erd-iterative-box"}, spec);
    const auto* det = report.find("do");
    const auto* box = report.find("erd-box");
    const auto* it = report.find("erd-iterative-box");
    REQUIRE(det);
    REQUIRE(box);
    REQUIRE(it);
    CHECK(box->metrics.j_nom >= det->metrics.j_nom);
    CHECK(box->metrics.violation_rate < det->metrics.violation_rate);
    REQUIRE(it->schedule_difference.has_value());
    CHECK(*it->schedule_difference <= 1e-8);
    CHECK(it->metrics.j_nom == doctest::Approx(box->metrics.j_nom).epsilon(1e-9));
    CHECK(box->lp_variables == det->lp_variables);
    CHECK(box->lp_constraints == det->lp_constraints);

    CHECK(report.to_json().find("tighten_seconds") == std::string::npos);
    CHECK(report.timings_json().find("tighten_seconds") != std::string::npos);
    CHECK(report.to_table().find("erd-budget:2") != std::string::npos);
    CHECK(tradeoff_csv(report).rfind("method,budget [channels]", 0) == 0);

    // Reports are pure functions of the inputs.
    auto again = compare_methods(model, {"do", "erd-box", "erd-budget:2", "erd-iterative-box"}, spec);
    CHECK(again.to_json() == report.to_json());

    CHECK_THROWS_AS(compare_methods(model, {"robust"}, spec), Error);
    CHECK_THROWS_AS(compare_methods(model, {"erd-budget:x"}, spec), Error);
}

TEST_CASE("plot data") {
    Reference ref(4);
    Policy p = ref.policy(TightenMode::box());
    auto batch = sample_disturbances(ref.tube, 20, 1, SamplingMode::uniform);
    auto m = evaluate(p, ref.ssm, ref.c, ref.costs, batch);
    const std::string env = envelope_csv(ref.ssm, p.nominal, &m);
    CHECK(env.rfind("step,variable,unit,nominal,original_lower,original_upper,tightened_lower,tightened_upper,envelope_min,envelope_max\n", 0) == 0);
    CHECK(env.find("\n1,E_BU[bu1],fraction,") != std::string::npos);
    Eigen::MatrixXd w = batch.sample(0);
    const std::string trace = trace_csv(ref.ssm.manifest, simulate(p, ref.ssm, w), w);
    CHECK(std::count(trace.begin(), trace.end(), '\n') == 1 + 5);
}
