#include "pbdw/problems.hpp"

#include <cmath>

#include "pbdw/rng.hpp"

namespace pbdw {

namespace {

using Trip = Eigen::Triplet<double>;

void add_triangle(std::vector<GridMesh::Tri>& tris, int n_h, double h,
                  const int vi[3], const int vj[3]) {
    GridMesh::Tri t{};
    double px[3], py[3];
    for (int a = 0; a < 3; ++a) {
        px[a] = vi[a] * h;
        py[a] = vj[a] * h;
        const bool boundary = vi[a] == 0 || vi[a] == n_h || vj[a] == 0 || vj[a] == n_h;
        t.dof[a] = boundary ? -1 : (vj[a] - 1) * (n_h - 1) + (vi[a] - 1);
    }
    const double det = (px[1] - px[0]) * (py[2] - py[0]) - (px[2] - px[0]) * (py[1] - py[0]);
    t.area = 0.5 * std::abs(det);
    t.cx = (px[0] + px[1] + px[2]) / 3.0;
    t.cy = (py[0] + py[1] + py[2]) / 3.0;
    for (int a = 0; a < 3; ++a) {
        const int b = (a + 1) % 3, c = (a + 2) % 3;
        t.gx[a] = (py[b] - py[c]) / det;
        t.gy[a] = (px[c] - px[b]) / det;
    }
    tris.push_back(t);
}

/// Exact P1 stiffness contributions of one triangle, optionally restricted by
/// an element filter (block membership).
template <typename Filter>
SpMat assemble_stiffness(const GridMesh& mesh, Filter&& keep) {
    std::vector<Trip> trips;
    for (const auto& t : mesh.tris) {
        if (!keep(t)) continue;
        for (int a = 0; a < 3; ++a) {
            if (t.dof[a] < 0) continue;
            for (int b = 0; b < 3; ++b) {
                if (t.dof[b] < 0) continue;
                const double k = t.area * (t.gx[a] * t.gx[b] + t.gy[a] * t.gy[b]);
                trips.emplace_back(t.dof[a], t.dof[b], k);
            }
        }
    }
    SpMat m(mesh.n_interior(), mesh.n_interior());
    m.setFromTriplets(trips.begin(), trips.end());
    m.makeCompressed();
    return m;
}

/// Midpoint-quadrature load vector of the constant unit source.
VectorXd assemble_unit_load(const GridMesh& mesh) {
    VectorXd f = VectorXd::Zero(mesh.n_interior());
    for (const auto& t : mesh.tris)
        for (int a = 0; a < 3; ++a)
            if (t.dof[a] >= 0) f(t.dof[a]) += t.area / 3.0;
    return f;
}

/// Midpoint-quadrature advection matrix for a fixed velocity field.
template <typename Field>
SpMat assemble_advection(const GridMesh& mesh, Field&& vel) {
    std::vector<Trip> trips;
    for (const auto& t : mesh.tris) {
        const auto [vx, vy] = vel(t.cx, t.cy);
        for (int a = 0; a < 3; ++a) {
            if (t.dof[a] < 0) continue;
            for (int b = 0; b < 3; ++b) {
                if (t.dof[b] < 0) continue;
                trips.emplace_back(t.dof[a], t.dof[b],
                                   t.area * (vx * t.gx[b] + vy * t.gy[b]) / 3.0);
            }
        }
    }
    SpMat m(mesh.n_interior(), mesh.n_interior());
    m.setFromTriplets(trips.begin(), trips.end());
    m.makeCompressed();
    return m;
}

struct PolyField {
    // divergence-free fields from polynomial stream functions, scaled to
    // unit sup-norm on the square and then by the global velocity scale
    double (*fx)(double, double);
    double (*fy)(double, double);
    double norm;
};

constexpr double kVelocityScale = 1.0 / 16.0;

const PolyField kFields[10] = {
    {[](double, double) { return 0.0; }, [](double, double) { return -1.0; }, 1.0},
    {[](double, double) { return 1.0; }, [](double, double) { return 0.0; }, 1.0},
    {[](double x, double) { return x; }, [](double, double y) { return -y; },
     1.4142135623730951},
    {[](double, double) { return 0.0; }, [](double x, double) { return -2.0 * x; }, 2.0},
    {[](double, double y) { return 2.0 * y; }, [](double, double) { return 0.0; }, 2.0},
    {[](double x, double) { return x * x; }, [](double x, double y) { return -2.0 * x * y; },
     2.23606797749979},
    {[](double x, double y) { return 2.0 * x * y; }, [](double, double y) { return -y * y; },
     2.23606797749979},
    {[](double, double) { return 0.0; }, [](double x, double) { return -3.0 * x * x; }, 3.0},
    {[](double, double y) { return 3.0 * y * y; }, [](double, double) { return 0.0; }, 3.0},
    {[](double x, double y) { return 2.0 * x * x * y; },
     [](double x, double y) { return -2.0 * x * y * y; }, 2.8284271247461903}};

std::pair<double, double> field_at(int q, double x, double y) {
    const auto& f = kFields[q];
    const double s = kVelocityScale / f.norm;
    return {s * f.fx(x, y), s * f.fy(x, y)};
}

}  // namespace

GridMesh GridMesh::unit_square(int n_h) {
    if (n_h < 2) throw ArgumentError("mesh needs at least 2 cells per side");
    GridMesh mesh;
    mesh.n_h = n_h;
    mesh.h = 1.0 / n_h;
    mesh.tris.reserve(static_cast<std::size_t>(2 * n_h * n_h));
    for (int j = 0; j < n_h; ++j) {
        for (int i = 0; i < n_h; ++i) {
            const int lower_i[3] = {i, i + 1, i + 1}, lower_j[3] = {j, j, j + 1};
            const int upper_i[3] = {i, i + 1, i}, upper_j[3] = {j, j + 1, j + 1};
            add_triangle(mesh.tris, n_h, mesh.h, lower_i, lower_j);
            add_triangle(mesh.tris, n_h, mesh.h, upper_i, upper_j);
        }
    }
    return mesh;
}

SensorSpec sensor_pattern(const std::string& name, double sigma) {
    std::vector<int> idx;
    if (name == "m64")
        idx = {1, 2, 3, 4, 5, 6, 7, 8};
    else if (name == "m36")
        idx = {1, 2, 4, 5, 7, 8};
    else if (name == "m9")
        idx = {1, 4, 7};
    else
        throw ArgumentError("unknown sensor pattern: " + name);
    SensorSpec spec;
    spec.sigma = sigma;
    for (int i : idx)
        for (int j : idx) spec.locations.emplace_back(i / 9.0, j / 9.0);
    return spec;
}

Problem thermal_block(int n_h) {
    if (n_h % 3 != 0) throw ArgumentError("thermal_block: n_h must be a multiple of 3");
    Problem p;
    p.name = "thermal_block";
    p.n_h = n_h;
    p.mesh = GridMesh::unit_square(n_h);
    const int n = p.mesh.n_interior();

    std::vector<SpMat> op_terms;
    op_terms.emplace_back(n, n);  // zero constant term
    op_terms[0].makeCompressed();
    for (int block = 0; block < 9; ++block) {
        const int bx = block % 3, by = block / 3;
        op_terms.push_back(assemble_stiffness(p.mesh, [&](const GridMesh::Tri& t) {
            return static_cast<int>(t.cx * 3.0) == bx && static_cast<int>(t.cy * 3.0) == by;
        }));
    }

    // Gram = unit-conductivity stiffness, summed exactly as assemble() does
    SpMat ru = op_terms[0];
    for (int q = 0; q < 9; ++q) ru += 1.0 * op_terms[q + 1];
    p.space = std::make_unique<InnerProductSpace>(InnerProductSpace::from_gram(std::move(ru)));

    std::vector<VectorXd> rhs_terms{assemble_unit_load(p.mesh)};
    ParameterBox box;
    box.intervals.assign(9, {0.1, 1.0});
    box.laws.assign(9, SamplingLaw::log_uniform);

    p.model = std::make_unique<AffineModel>(AffineModel::with_identity_theta(
        p.space.get(), std::move(op_terms), std::move(rhs_terms), std::move(box)));
    return p;
}

Problem advection_diffusion_lite(int n_h, double kappa) {
    if (n_h < 8) throw ArgumentError("advection_diffusion_lite: n_h must be at least 8");
    if (!(kappa > 0.0)) throw ArgumentError("advection_diffusion_lite: kappa must be positive");
    Problem p;
    p.name = "advection_diffusion_lite";
    p.n_h = n_h;
    p.kappa = kappa;
    p.mesh = GridMesh::unit_square(n_h);

    SpMat unit_stiffness = assemble_stiffness(p.mesh, [](const GridMesh::Tri&) { return true; });

    std::vector<SpMat> op_terms;
    op_terms.push_back(SpMat(kappa * unit_stiffness));
    for (int q = 0; q < 10; ++q)
        op_terms.push_back(
            assemble_advection(p.mesh, [q](double x, double y) { return field_at(q, x, y); }));

    ParameterBox box;
    for (int q = 0; q < 5; ++q) box.intervals.push_back({-1.0, -0.5});
    for (int q = 0; q < 5; ++q) box.intervals.push_back({-2.0, -1.0});
    box.laws.assign(10, SamplingLaw::uniform);

    // cell Peclet check over all box corners, on element centroids
    const int n_el = static_cast<int>(p.mesh.tris.size());
    MatrixXd fx(n_el, 10), fy(n_el, 10);
    for (int e = 0; e < n_el; ++e)
        for (int q = 0; q < 10; ++q) {
            const auto [vx, vy] = field_at(q, p.mesh.tris[e].cx, p.mesh.tris[e].cy);
            fx(e, q) = vx;
            fy(e, q) = vy;
        }
    double peclet_max = 0.0;
    for (int corner = 0; corner < (1 << 10); ++corner) {
        VectorXd xi(10);
        for (int q = 0; q < 10; ++q)
            xi(q) = (corner >> q) & 1 ? box.intervals[q].hi : box.intervals[q].lo;
        const VectorXd vx = fx * xi, vy = fy * xi;
        const double vmax = (vx.array().square() + vy.array().square()).sqrt().maxCoeff();
        peclet_max = std::max(peclet_max, vmax * p.mesh.h / (2.0 * kappa));
    }
    if (peclet_max >= 2.0)
        throw ConfigError("advection_diffusion_lite: cell Peclet number " +
                          std::to_string(peclet_max) +
                          " at a box corner; use a finer mesh (larger n_h) or larger kappa");

    SpMat ru = std::move(unit_stiffness);
    p.space = std::make_unique<InnerProductSpace>(InnerProductSpace::from_gram(std::move(ru)));

    std::vector<VectorXd> rhs_terms{assemble_unit_load(p.mesh)};
    p.model = std::make_unique<AffineModel>(AffineModel::with_identity_theta(
        p.space.get(), std::move(op_terms), std::move(rhs_terms), std::move(box)));
    return p;
}

MatrixXd sensors_radial(const InnerProductSpace& space, const GridMesh& mesh,
                        const SensorSpec& spec) {
    if (!(spec.sigma > 0.0)) throw ArgumentError("sensor width must be positive");
    for (const auto& [x, y] : spec.locations)
        if (!(x > 0.0 && x < 1.0 && y > 0.0 && y < 1.0))
            throw ArgumentError("sensor locations must be strictly interior");
    const int m = static_cast<int>(spec.locations.size());
    MatrixXd ells = MatrixXd::Zero(space.dim(), m);
    const double inv_s2 = 1.0 / (spec.sigma * spec.sigma);
    for (int s = 0; s < m; ++s) {
        const auto [sx, sy] = spec.locations[s];
        for (const auto& t : mesh.tris) {
            const double dx = t.cx - sx, dy = t.cy - sy;
            const double w = t.area * std::exp(-(dx * dx + dy * dy) * inv_s2) / 3.0;
            for (int a = 0; a < 3; ++a)
                if (t.dof[a] >= 0) ells(t.dof[a], s) += w;
        }
    }
    return ells;
}

std::vector<VectorXd> sample_parameters(const ParameterBox& box, int count, std::uint64_t seed) {
    if (count < 1) throw ArgumentError("sample_parameters: count must be positive");
    box.validate();
    std::vector<VectorXd> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        CounterRng rng(seed, static_cast<std::uint64_t>(i));
        VectorXd xi(box.dim());
        for (int q = 0; q < box.dim(); ++q) {
            const auto& iv = box.intervals[q];
            if (box.laws[q] == SamplingLaw::uniform) {
                xi(q) = rng.uniform(iv.lo, iv.hi);
            } else {
                xi(q) = std::exp(rng.uniform(std::log(iv.lo), std::log(iv.hi)));
            }
        }
        out.push_back(std::move(xi));
    }
    return out;
}

}  // namespace pbdw
