#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include <idiomark/losses.hpp>
#include <idiomark/rng.hpp>

using namespace idiomark;

namespace {

std::vector<double> random_dist(Rng& rng, size_t k) {
  std::vector<double> p(k);
  double sum = 0;
  for (double& x : p) {
    x = 1e-6 + rng.uniform();
    sum += x;
  }
  for (double& x : p) x /= sum;
  return p;
}

}  // namespace

TEST_CASE("kl_div hand values") {
  REQUIRE(kl_div<double>({0.5, 0.5}, {0.5, 0.5}) == 0.0);
  REQUIRE(kl_div<double>({1.0, 0.0}, {0.5, 0.5}) ==
          Catch::Approx(std::log(2.0)).epsilon(1e-9));
  REQUIRE(kl_div<double>({0.75, 0.25}, {0.25, 0.75}) ==
          Catch::Approx(0.5 * std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("kl_div is non-negative on random distributions") {
  Rng rng(17);
  for (int i = 0; i < 2000; ++i) {
    const size_t k = 2 + rng.bounded(6);
    const auto p = random_dist(rng, k);
    const auto q = random_dist(rng, k);
    REQUIRE(kl_div(p, q) >= -1e-9);
  }
}

TEST_CASE("kl_div rejects mismatched lengths") {
  REQUIRE_THROWS_AS(kl_div<double>({0.5, 0.5}, {1.0}), ContractError);
}

TEST_CASE("rdrop loss composition") {
  const std::vector<double> p1 = {0.9, 0.1}, p2 = {0.6, 0.4};

  SECTION("alpha zero reduces to doubled cross-entropy") {
    const auto lb = rdrop_loss(p1, p2, 0, 0.0);
    REQUIRE(lb.total == lb.ce);
    REQUIRE(lb.ce ==
            Catch::Approx(-std::log(0.9) - std::log(0.6)).epsilon(1e-12));
  }

  SECTION("identical forwards have zero kl") {
    const auto lb = rdrop_loss(p1, p1, 1, 4.0);
    REQUIRE(lb.kl == 0.0);
    REQUIRE(lb.total == lb.ce);
  }

  SECTION("worked example, recomputed by direct summation") {
    // ce = -ln 0.9 - ln 0.6
    // kl = (KL(p1||p2) + KL(p2||p1)) / 2
    //    = (0.9 ln1.5 + 0.1 ln0.25 + 0.6 ln(2/3) + 0.4 ln4) / 2
    const double ce = -std::log(0.9) - std::log(0.6);
    const double klf = 0.9 * std::log(1.5) + 0.1 * std::log(0.25);
    const double klb = 0.6 * std::log(2.0 / 3.0) + 0.4 * std::log(4.0);
    const double kl = (klf + klb) / 2.0;
    const auto lb = rdrop_loss(p1, p2, 0, 2.0);
    REQUIRE(lb.ce == Catch::Approx(0.6161861394).epsilon(1e-9));
    REQUIRE(lb.kl == Catch::Approx(0.2687639204).epsilon(1e-9));
    REQUIRE(lb.total == Catch::Approx(1.1537139802).epsilon(1e-9));
    REQUIRE(lb.ce == Catch::Approx(ce).epsilon(1e-12));
    REQUIRE(lb.kl == Catch::Approx(kl).epsilon(1e-12));
    REQUIRE(lb.total == Catch::Approx(ce + 2.0 * kl).epsilon(1e-12));
  }

  SECTION("total is monotone non-decreasing in alpha for p1 != p2") {
    double prev = -1;
    for (double alpha : {0.0, 0.5, 1.0, 2.0, 4.0}) {
      const double t = rdrop_loss(p1, p2, 0, alpha).total;
      REQUIRE(t >= prev);
      prev = t;
    }
  }

  SECTION("negative alpha is a contract violation") {
    REQUIRE_THROWS_AS(rdrop_loss(p1, p2, 0, -0.1), ContractError);
  }
}

TEST_CASE("rdrop logit gradient matches finite differences") {
  // logits -> softmax -> rdrop total; check d total / d logits both sides
  Rng rng(5);
  auto softmax2 = [](double a, double b) {
    const double m = std::max(a, b);
    const double ea = std::exp(a - m), eb = std::exp(b - m);
    return std::vector<double>{ea / (ea + eb), eb / (ea + eb)};
  };
  for (int c = 0; c < 200; ++c) {
    double z1[2] = {rng.normal(), rng.normal()};
    double z2[2] = {rng.normal(), rng.normal()};
    const int y = static_cast<int>(rng.bounded(2));
    const double alpha = (c % 4 == 0) ? 0.0 : 2.0 * rng.uniform();

    const auto p1v = softmax2(z1[0], z1[1]);
    const auto p2v = softmax2(z2[0], z2[1]);
    VecX<double> p1(2), p2(2), g1, g2;
    p1 << p1v[0], p1v[1];
    p2 << p2v[0], p2v[1];
    rdrop_logit_grads(p1, p2, y, alpha, &g1, &g2);

    const double h = 1e-7;
    for (int side = 0; side < 2; ++side) {
      double* z = side == 0 ? z1 : z2;
      const VecX<double>& g = side == 0 ? g1 : g2;
      for (int k = 0; k < 2; ++k) {
        const double orig = z[k];
        z[k] = orig + h;
        const auto pa = softmax2(z1[0], z1[1]);
        const auto pb = softmax2(z2[0], z2[1]);
        const double lp = rdrop_loss(pa, pb, y, alpha).total;
        z[k] = orig - h;
        const auto pc = softmax2(z1[0], z1[1]);
        const auto pd = softmax2(z2[0], z2[1]);
        const double lm = rdrop_loss(pc, pd, y, alpha).total;
        z[k] = orig;
        const double num = (lp - lm) / (2 * h);
        REQUIRE(g(k) == Catch::Approx(num).margin(1e-5));
      }
    }
  }
}

TEST_CASE("fgm perturbation contract") {
  MatX<double> g(2, 1);
  g << 3.0, 4.0;
  const MatX<double> d = fgm_perturb(g, 1.0);
  REQUIRE(d(0, 0) == Catch::Approx(0.6).epsilon(1e-12));
  REQUIRE(d(1, 0) == Catch::Approx(0.8).epsilon(1e-12));

  const MatX<double> zero = fgm_perturb(MatX<double>::Zero(3, 4), 2.0);
  REQUIRE(zero.norm() == 0.0);

  REQUIRE(fgm_perturb(g, 0.0).norm() == 0.0);
  REQUIRE_THROWS_AS(fgm_perturb(g, -1.0), ContractError);

  Rng rng(9);
  for (int c = 0; c < 500; ++c) {
    MatX<double> m(1 + rng.bounded(5), 1 + rng.bounded(8));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.normal();
    const double eps = 0.01 + 3.0 * rng.uniform();
    if (m.norm() < 1e-12) continue;
    REQUIRE(fgm_perturb(m, eps).norm() == Catch::Approx(eps).epsilon(1e-6));
  }
}

TEST_CASE("contrastive loss closed form for orthogonal pairs") {
  MatX<double> reps(2, 2);
  reps << 1.0, 0.0, 0.0, 1.0;
  const double loss = contrastive_auxiliary_loss(reps, reps, 1.0);
  const double expected = -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0));
  REQUIRE(loss == Catch::Approx(expected).epsilon(1e-9));
}

TEST_CASE("contrastive loss ignores positive rescaling") {
  Rng rng(41);
  MatX<double> r1(3, 4), r2(3, 4);
  for (Eigen::Index i = 0; i < 3; ++i)
    for (Eigen::Index j = 0; j < 4; ++j) {
      r1(i, j) = rng.normal();
      r2(i, j) = rng.normal();
    }
  const double base = contrastive_auxiliary_loss(r1, r2, 0.1);
  MatX<double> r1s = r1;
  r1s.row(1) *= 7.5;
  MatX<double> r2s = r2;
  r2s.row(2) *= 0.003;
  REQUIRE(contrastive_auxiliary_loss(r1s, r2s, 0.1) ==
          Catch::Approx(base).epsilon(1e-9));
}

TEST_CASE("contrastive loss is symmetric under joint permutation") {
  Rng rng(43);
  MatX<double> r1(4, 3), r2(4, 3);
  for (Eigen::Index i = 0; i < 4; ++i)
    for (Eigen::Index j = 0; j < 3; ++j) {
      r1(i, j) = rng.normal();
      r2(i, j) = rng.normal();
    }
  const double base = contrastive_auxiliary_loss(r1, r2, 0.05);
  const int perm[4] = {2, 0, 3, 1};
  MatX<double> q1(4, 3), q2(4, 3);
  for (int i = 0; i < 4; ++i) {
    q1.row(i) = r1.row(perm[i]);
    q2.row(i) = r2.row(perm[i]);
  }
  REQUIRE(contrastive_auxiliary_loss(q1, q2, 0.05) ==
          Catch::Approx(base).epsilon(1e-9));
}

TEST_CASE("contrastive preconditions") {
  MatX<double> one(1, 2);
  one << 1.0, 0.0;
  REQUIRE_THROWS_AS(contrastive_auxiliary_loss(one, one, 1.0), ContractError);
  MatX<double> a(2, 2), b(3, 2);
  a.setOnes();
  b.setOnes();
  REQUIRE_THROWS_AS(contrastive_auxiliary_loss(a, b, 1.0), ContractError);
  MatX<double> c(2, 2);
  c.setOnes();
  REQUIRE_THROWS_AS(contrastive_auxiliary_loss(a, c, 0.0), ContractError);
}

TEST_CASE("contrastive gradient matches finite differences") {
  Rng rng(55);
  MatX<double> r1(3, 4), r2(3, 4);
  for (Eigen::Index i = 0; i < 3; ++i)
    for (Eigen::Index j = 0; j < 4; ++j) {
      r1(i, j) = rng.normal();
      r2(i, j) = rng.normal();
    }
  const double temp = 0.2, weight = 0.7;
  MatX<double> d1 = MatX<double>::Zero(3, 4), d2 = MatX<double>::Zero(3, 4);
  contrastive_grads(r1, r2, temp, weight, &d1, &d2);

  const double h = 1e-6;
  for (int side = 0; side < 2; ++side) {
    MatX<double>& r = side == 0 ? r1 : r2;
    const MatX<double>& d = side == 0 ? d1 : d2;
    for (Eigen::Index i = 0; i < 3; ++i)
      for (Eigen::Index j = 0; j < 4; ++j) {
        const double orig = r(i, j);
        r(i, j) = orig + h;
        const double lp = weight * contrastive_auxiliary_loss(r1, r2, temp);
        r(i, j) = orig - h;
        const double lm = weight * contrastive_auxiliary_loss(r1, r2, temp);
        r(i, j) = orig;
        const double num = (lp - lm) / (2 * h);
        REQUIRE(d(i, j) == Catch::Approx(num).margin(1e-6));
      }
  }
}

TEST_CASE("cross entropy clamps vanishing probabilities") {
  const double ce = cross_entropy<double>({0.0, 1.0}, 0);
  REQUIRE(std::isfinite(ce));
  REQUIRE(ce == Catch::Approx(-std::log(1e-12)).epsilon(1e-9));
  REQUIRE_THROWS_AS(cross_entropy<double>({0.5, 0.5}, 2), ContractError);
}
