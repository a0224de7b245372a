/*
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include "sumgp/surrogate.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

namespace sumgp {

namespace {

// Scales indentation d = kLoadScale * load / E so the depth spans roughly
// [0.05 mm, 100 mm] over the default mass and stiffness ranges.
constexpr double kLoadScale = 50.0;
// Effective load stood in for a deformable top object (no mass parameter).
constexpr double kDeformableTopLoad = 0.3;
// Indentation never exceeds this fraction of the bottom amplitude.
constexpr double kMaxIndentFraction = 0.8;

double gauss_bump(double x, double y, double cx, double cy, double radius,
                  double amplitude) {
    const double ddx = x - cx;
    const double ddy = y - cy;
    return amplitude * std::exp(-(ddx * ddx + ddy * ddy) / (2.0 * radius * radius));
}

struct ContactParams {
    bool bottom_deformable = false;
    bool top_deformable = false;
    double e_bottom = 0.0;
    double nu_bottom = 0.0;
    double depth = 0.0;       // indentation d
    double top_amplitude = 0.0;
    double top_radius = 0.0;
    double px = 0.0, py = 0.0; // top placement point
};

ContactParams contact_params(const ParameterSpace& space, const SceneSpec& scene,
                             const Vector& theta_k) {
    const ObjectSpec& bottom = space.object(scene.bottom_id);
    const ObjectSpec& top = space.object(scene.top_id);
    if (scene.bottom_id == scene.top_id) {
        throw Error("surrogate: scene '" + scene.name + "' stacks an object on itself");
    }
    const int nb = static_cast<int>(bottom.dims.size());
    const int nt = static_cast<int>(top.dims.size());
    if (theta_k.size() != nb + nt) {
        throw Error("surrogate: subspace vector has length " +
                    std::to_string(theta_k.size()) + ", expected " +
                    std::to_string(nb + nt));
    }
    auto check = [&](const ObjectSpec& o, int base) {
        for (int j = 0; j < static_cast<int>(o.dims.size()); ++j) {
            const DimSpec& d = o.dims[j];
            const double v = theta_k[base + j];
            if (!std::isfinite(v) || v < d.lower || v > d.upper) {
                throw Error("surrogate: parameter '" + d.name + "' of '" + o.name +
                            "' value " + std::to_string(v) + " outside bounds");
            }
        }
    };
    check(bottom, 0);
    check(top, nb);

    ContactParams cp;
    cp.bottom_deformable = bottom.material_class == MaterialClass::Deformable;
    cp.top_deformable = top.material_class == MaterialClass::Deformable;
    cp.px = scene.bottom.cx + scene.dx;
    cp.py = scene.bottom.cy + scene.dy;

    cp.top_amplitude = scene.top.height;
    cp.top_radius = scene.top.radius;
    if (cp.top_deformable) {
        const double e_top = theta_k[nb];
        const double e_hi = top.dims[0].upper;
        const double s = e_top / e_hi;
        cp.top_amplitude = scene.top.height * s;
        cp.top_radius = scene.top.radius * (1.0 + 0.5 * (1.0 - s));
    }

    if (cp.bottom_deformable) {
        cp.e_bottom = theta_k[0];
        cp.nu_bottom = theta_k[1];
        const double load = cp.top_deformable ? kDeformableTopLoad : theta_k[nb];
        cp.depth = std::min(kLoadScale * load / cp.e_bottom,
                            kMaxIndentFraction * scene.bottom.height);
    }
    return cp;
}

} // namespace

Heightmap Heightmap::zeros(const GridConfig& grid) {
    if (grid.width <= 0 || grid.height <= 0 || grid.cell_size <= 0.0) {
        throw Error("Heightmap: invalid grid dimensions");
    }
    Heightmap hm;
    hm.width = grid.width;
    hm.height = grid.height;
    hm.cell_size = grid.cell_size;
    hm.values.assign(static_cast<std::size_t>(grid.width) * grid.height, 0.0);
    return hm;
}

std::string Heightmap::to_text() const {
    std::ostringstream out;
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", cell_size);
    out << "HMAP " << width << ' ' << height << ' ' << buf << '\n';
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            std::snprintf(buf, sizeof(buf), "%.9g", at(r, c));
            if (c) out << ' ';
            out << buf;
        }
        out << '\n';
    }
    return out.str();
}

Heightmap Heightmap::from_text(std::istream& in) {
    std::string tag;
    Heightmap hm;
    in >> tag >> hm.width >> hm.height >> hm.cell_size;
    if (tag != "HMAP" || !in || hm.width <= 0 || hm.height <= 0 ||
        hm.cell_size <= 0.0) {
        throw Error("Heightmap: malformed HMAP header");
    }
    hm.values.resize(static_cast<std::size_t>(hm.width) * hm.height);
    for (double& v : hm.values) {
        if (!(in >> v)) throw Error("Heightmap: truncated HMAP body");
    }
    return hm;
}

void Heightmap::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error("Heightmap: cannot write " + path);
    out << to_text();
    if (!out) throw Error("Heightmap: write failed for " + path);
}

Heightmap Heightmap::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("Heightmap: cannot read " + path);
    return from_text(in);
}

void render_footprint(Heightmap& hm, double cx, double cy, double radius,
                      double amplitude) {
    if (amplitude < 0.0 || radius <= 0.0) {
        throw Error("render_footprint: amplitude must be >= 0 and radius > 0");
    }
    for (int r = 0; r < hm.height; ++r) {
        for (int c = 0; c < hm.width; ++c) {
            hm.at(r, c) += gauss_bump(hm.cell_x(c), hm.cell_y(r), cx, cy, radius,
                                      amplitude);
        }
    }
}

double load_depth(const ParameterSpace& space, const SceneSpec& scene,
                  const Vector& theta_k) {
    return contact_params(space, scene, theta_k).depth;
}

Heightmap surrogate_simulate(const ParameterSpace& space, const SceneSpec& scene,
                             const Vector& theta_k, const GridConfig& grid) {
    const ContactParams cp = contact_params(space, scene, theta_k);
    Heightmap hm = Heightmap::zeros(grid);

    const double rc = cp.top_radius; // contact radius
    // Bottom surface height directly under the top centroid, minus indentation.
    const double d_stack = gauss_bump(cp.px, cp.py, scene.bottom.cx, scene.bottom.cy,
                                      scene.bottom.radius, scene.bottom.height) -
                           cp.depth;

    for (int r = 0; r < hm.height; ++r) {
        for (int c = 0; c < hm.width; ++c) {
            const double x = hm.cell_x(c);
            const double y = hm.cell_y(r);
            double b = gauss_bump(x, y, scene.bottom.cx, scene.bottom.cy,
                                  scene.bottom.radius, scene.bottom.height);
            if (cp.bottom_deformable && cp.depth > 0.0) {
                const double ddx = x - cp.px;
                const double ddy = y - cp.py;
                const double rho = std::sqrt(ddx * ddx + ddy * ddy);
                // Indentation dimple under the contact.
                b -= cp.depth * std::exp(-rho * rho / (2.0 * rc * rc));
                // Poisson bulge ring around the contact radius; negative
                // ratios produce a depression instead.
                const double ring = rho - 1.5 * rc;
                const double sig = 0.5 * rc;
                b += cp.nu_bottom * cp.depth *
                     std::exp(-ring * ring / (2.0 * sig * sig));
            }
            const double t = d_stack + gauss_bump(x, y, cp.px, cp.py, cp.top_radius,
                                                  cp.top_amplitude);
            // Top-down view: the higher surface occludes the lower one.
            hm.at(r, c) = std::max(0.0, std::max(b, t));
        }
    }
    return hm;
}

double reward(const Heightmap& observed, const Heightmap& predicted) {
    if (observed.width != predicted.width || observed.height != predicted.height ||
        observed.cell_size != predicted.cell_size) {
        throw Error("reward: heightmap grids do not match");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < observed.values.size(); ++i) {
        sum += std::abs(observed.values[i] - predicted.values[i]);
    }
    return -sum * observed.cell_size * observed.cell_size;
}

std::vector<Observation> make_dataset(const std::vector<SceneSpec>& scenes,
                                      const ParameterSpace& space,
                                      const Vector& theta_star,
                                      const GridConfig& grid,
                                      const NoiseConfig& noise) {
    validate(space, theta_star);
    std::mt19937_64 rng(noise.seed);
    std::uniform_real_distribution<double> jitter(-noise.amplitude, noise.amplitude);
    std::vector<Observation> out;
    out.reserve(scenes.size());
    for (const SceneSpec& scene : scenes) {
        Observation obs;
        obs.scene = scene;
        obs.k.object_ids = {scene.bottom_id, scene.top_id};
        obs.observed = surrogate_simulate(space, scene,
                                          slice_params(space, theta_star, obs.k), grid);
        if (noise.amplitude > 0.0) {
            for (double& v : obs.observed.values) {
                v = std::max(0.0, v + jitter(rng));
            }
        }
        out.push_back(std::move(obs));
    }
    return out;
}

nlohmann::json GridConfig::to_json() const {
    return {{"width", width}, {"height", height}, {"cell_size", cell_size}};
}

GridConfig GridConfig::from_json(const nlohmann::json& j) {
    GridConfig g;
    g.width = j.at("width").get<int>();
    g.height = j.at("height").get<int>();
    g.cell_size = j.at("cell_size").get<double>();
    return g;
}

nlohmann::json SceneSpec::to_json() const {
    auto fp = [](const Footprint& f) {
        return nlohmann::json{{"cx", f.cx}, {"cy", f.cy}, {"radius", f.radius},
                              {"height", f.height}};
    };
    return {{"name", name},
            {"bottom_id", bottom_id},
            {"top_id", top_id},
            {"bottom", fp(bottom)},
            {"top", fp(top)},
            {"action", {dx, dy}}};
}

SceneSpec SceneSpec::from_json(const nlohmann::json& j) {
    auto fp = [](const nlohmann::json& jf) {
        Footprint f;
        f.cx = jf.at("cx").get<double>();
        f.cy = jf.at("cy").get<double>();
        f.radius = jf.at("radius").get<double>();
        f.height = jf.at("height").get<double>();
        return f;
    };
    SceneSpec s;
    s.name = j.at("name").get<std::string>();
    s.bottom_id = j.at("bottom_id").get<int>();
    s.top_id = j.at("top_id").get<int>();
    s.bottom = fp(j.at("bottom"));
    s.top = fp(j.at("top"));
    s.dx = j.at("action").at(0).get<double>();
    s.dy = j.at("action").at(1).get<double>();
    return s;
}

} // namespace sumgp
