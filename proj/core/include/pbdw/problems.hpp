#pragma once

#include <memory>
#include <string>
#include <vector>

#include "pbdw/model.hpp"

namespace pbdw {

/// Structured right-triangle P1 mesh on the unit square with homogeneous
/// Dirichlet boundary, n_h cells per side. Interior nodes carry the degrees
/// of freedom, (n_h - 1)^2 of them.
struct GridMesh {
    struct Tri {
        int dof[3];          // -1 for boundary vertices
        double area;
        double cx, cy;       // centroid
        double gx[3], gy[3]; // constant P1 gradients
    };

    int n_h = 0;
    double h = 0.0;
    std::vector<Tri> tris;

    static GridMesh unit_square(int n_h);
    int n_interior() const { return (n_h - 1) * (n_h - 1); }
};

/// Radial integral sensors: locations and Gaussian filter width.
struct SensorSpec {
    std::vector<std::pair<double, double>> locations;
    double sigma = 0.015625;  // 2^-6
};

/// Named interior grid patterns on (i/9, j/9): "m64" all 1..8, "m36" the
/// indices {1,2,4,5,7,8}, "m9" the indices {1,4,7}.
SensorSpec sensor_pattern(const std::string& name, double sigma = 0.015625);

struct Problem {
    std::unique_ptr<InnerProductSpace> space;
    std::unique_ptr<AffineModel> model;
    GridMesh mesh;
    std::string name;
    int n_h = 0;
    double kappa = 0.0;
};

/// Heat diffusion on the unit square split into a 3x3 grid of conductivity
/// blocks: nine affine stiffness terms (one per block), zero constant term,
/// constant unit source, parameter box [1/10, 1]^9 with log-uniform sampling.
/// The Gram matrix is the kappa = 1 stiffness (H^1_0 seminorm) and equals the
/// sum of the nine terms bit for bit.
Problem thermal_block(int n_h);

/// Nonsymmetric advection-diffusion on the unit square: symmetric diffusion
/// kappa in the constant term plus ten fixed divergence-free polynomial
/// advection fields with identity coefficients, box [-1,-1/2]^5 x [-2,-1]^5.
/// Construction fails if the cell Peclet number reaches 2 at any box corner.
Problem advection_diffusion_lite(int n_h, double kappa = 0.01);

/// Assemble the sensor functionals (midpoint quadrature of the Gaussian
/// weight against the nodal basis); one column per sensor.
MatrixXd sensors_radial(const InnerProductSpace& space, const GridMesh& mesh,
                        const SensorSpec& spec);

/// I.i.d. parameter draws per the box's sampling laws; stream derived from
/// (seed, sample index) so workers can re-derive any draw independently.
std::vector<VectorXd> sample_parameters(const ParameterBox& box, int count, std::uint64_t seed);

}  // namespace pbdw
