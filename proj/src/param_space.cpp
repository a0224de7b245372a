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
#include "sumgp/param_space.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <set>

namespace sumgp {

ObjectSpec ObjectSpec::rigid(int id, std::string name, double mass_lo, double mass_hi) {
    ObjectSpec o;
    o.id = id;
    o.name = std::move(name);
    o.material_class = MaterialClass::Rigid;
    o.dims = {{"mass", mass_lo, mass_hi, DimScale::Linear}};
    return o;
}

ObjectSpec ObjectSpec::deformable(int id, std::string name, double e_lo, double e_hi,
                                  double nu_lo, double nu_hi) {
    ObjectSpec o;
    o.id = id;
    o.name = std::move(name);
    o.material_class = MaterialClass::Deformable;
    o.dims = {{"youngs_modulus", e_lo, e_hi, DimScale::Log10},
              {"poisson_ratio", nu_lo, nu_hi, DimScale::Linear}};
    return o;
}

ParameterSpace::ParameterSpace(std::vector<ObjectSpec> objects)
    : objects_(std::move(objects)) {
    if (objects_.empty()) {
        throw Error("ParameterSpace: empty object list");
    }
    int offset = 0;
    for (std::size_t i = 0; i < objects_.size(); ++i) {
        const ObjectSpec& o = objects_[i];
        if (o.dims.empty()) {
            throw Error("ParameterSpace: object '" + o.name + "' has no dimensions");
        }
        const std::size_t expected =
            o.material_class == MaterialClass::Rigid ? 1u : 2u;
        if (o.dims.size() != expected) {
            throw Error("ParameterSpace: object '" + o.name +
                        "' has wrong dimension count for its material class");
        }
        for (const DimSpec& d : o.dims) {
            if (!(d.lower < d.upper)) {
                throw Error("ParameterSpace: dimension '" + d.name + "' of '" +
                            o.name + "' has invalid bounds");
            }
            if (d.scale == DimScale::Log10 && d.lower <= 0.0) {
                throw Error("ParameterSpace: log-scaled dimension '" + d.name +
                            "' requires positive bounds");
            }
        }
        if (!index_by_id_.emplace(o.id, i).second) {
            throw Error("ParameterSpace: duplicate object id " + std::to_string(o.id));
        }
        offsets_.push_back(offset);
        for (const DimSpec& d : o.dims) flat_dims_.push_back(d);
        offset += static_cast<int>(o.dims.size());
    }
    total_dims_ = offset;
}

const ObjectSpec& ParameterSpace::object(int id) const {
    auto it = index_by_id_.find(id);
    if (it == index_by_id_.end()) {
        throw Error("ParameterSpace: unknown object id " + std::to_string(id));
    }
    return objects_[it->second];
}

int ParameterSpace::offset_of(int id) const {
    auto it = index_by_id_.find(id);
    if (it == index_by_id_.end()) {
        throw Error("ParameterSpace: unknown object id " + std::to_string(id));
    }
    return offsets_[it->second];
}

std::vector<int> ParameterSpace::subset_flat_indices(const SubsetIndex& k) const {
    if (k.object_ids.empty()) {
        throw Error("SubsetIndex: empty subset");
    }
    std::set<int> seen;
    std::vector<int> idx;
    for (int id : k.object_ids) {
        if (!seen.insert(id).second) {
            throw Error("SubsetIndex: duplicate object id " + std::to_string(id));
        }
        const int off = offset_of(id);
        const ObjectSpec& o = object(id);
        for (std::size_t j = 0; j < o.dims.size(); ++j) {
            idx.push_back(off + static_cast<int>(j));
        }
    }
    return idx;
}

int ParameterSpace::subset_dims(const SubsetIndex& k) const {
    return static_cast<int>(subset_flat_indices(k).size());
}

void validate(const ParameterSpace& space, const Vector& theta) {
    if (theta.size() != space.total_dims()) {
        throw Error("validate: parameter vector has length " +
                    std::to_string(theta.size()) + ", expected " +
                    std::to_string(space.total_dims()));
    }
    const auto& dims = space.flat_dims();
    for (int j = 0; j < theta.size(); ++j) {
        const DimSpec& d = dims[j];
        if (!std::isfinite(theta[j]) || theta[j] < d.lower || theta[j] > d.upper) {
            throw Error("validate: dimension '" + d.name + "' (index " +
                        std::to_string(j) + ") value " + std::to_string(theta[j]) +
                        " outside [" + std::to_string(d.lower) + ", " +
                        std::to_string(d.upper) + "]");
        }
    }
}

Vector slice_params(const ParameterSpace& space, const Vector& theta,
                    const SubsetIndex& k) {
    if (theta.size() != space.total_dims()) {
        throw Error("slice_params: parameter vector length mismatch");
    }
    const std::vector<int> idx = space.subset_flat_indices(k);
    Vector out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = theta[idx[i]];
    return out;
}

Vector scatter_params(const ParameterSpace& space, const Vector& sub,
                      const SubsetIndex& k, const Vector& base) {
    if (base.size() != space.total_dims()) {
        throw Error("scatter_params: base vector length mismatch");
    }
    const std::vector<int> idx = space.subset_flat_indices(k);
    if (sub.size() != static_cast<Eigen::Index>(idx.size())) {
        throw Error("scatter_params: subspace vector has length " +
                    std::to_string(sub.size()) + ", expected " +
                    std::to_string(idx.size()));
    }
    Vector out = base;
    for (std::size_t i = 0; i < idx.size(); ++i) out[idx[i]] = sub[i];
    return out;
}

double normalize_dim(const DimSpec& d, double v) {
    if (v < d.lower || v > d.upper) {
        throw Error("normalize: dimension '" + d.name + "' value " +
                    std::to_string(v) + " outside bounds");
    }
    if (d.scale == DimScale::Log10) {
        const double lo = std::log10(d.lower);
        const double hi = std::log10(d.upper);
        return (std::log10(v) - lo) / (hi - lo);
    }
    return (v - d.lower) / (d.upper - d.lower);
}

double denormalize_dim(const DimSpec& d, double u) {
    if (u < 0.0 || u > 1.0) {
        throw Error("denormalize: dimension '" + d.name + "' coordinate " +
                    std::to_string(u) + " outside [0, 1]");
    }
    if (d.scale == DimScale::Log10) {
        const double lo = std::log10(d.lower);
        const double hi = std::log10(d.upper);
        return std::pow(10.0, lo + u * (hi - lo));
    }
    return d.lower + u * (d.upper - d.lower);
}

Vector normalize(const ParameterSpace& space, const Vector& theta) {
    if (theta.size() != space.total_dims()) {
        throw Error("normalize: parameter vector length mismatch");
    }
    Vector u(theta.size());
    const auto& dims = space.flat_dims();
    for (int j = 0; j < theta.size(); ++j) u[j] = normalize_dim(dims[j], theta[j]);
    return u;
}

Vector denormalize(const ParameterSpace& space, const Vector& u) {
    if (u.size() != space.total_dims()) {
        throw Error("denormalize: vector length mismatch");
    }
    Vector theta(u.size());
    const auto& dims = space.flat_dims();
    for (int j = 0; j < u.size(); ++j) theta[j] = denormalize_dim(dims[j], u[j]);
    return theta;
}

std::vector<Vector> sample_uniform(const ParameterSpace& space,
                                   std::uint64_t seed, int n) {
    if (n < 1) throw Error("sample_uniform: n must be >= 1");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const auto& dims = space.flat_dims();
    std::vector<Vector> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
        Vector theta(space.total_dims());
        for (int j = 0; j < space.total_dims(); ++j) {
            const DimSpec& d = dims[j];
            theta[j] = d.lower + unit(rng) * (d.upper - d.lower);
        }
        out.push_back(std::move(theta));
    }
    return out;
}

namespace {

MaterialClass class_from_string(const std::string& s) {
    if (s == "rigid") return MaterialClass::Rigid;
    if (s == "deformable") return MaterialClass::Deformable;
    throw Error("ParameterSpace: unknown material class '" + s + "'");
}

std::array<double, 2> bounds_pair(const nlohmann::json& j, const std::string& key) {
    if (!j.contains(key) || !j[key].is_array() || j[key].size() != 2) {
        throw Error("ParameterSpace: bounds field '" + key + "' must be [lo, hi]");
    }
    return {j[key][0].get<double>(), j[key][1].get<double>()};
}

void reject_unknown(const nlohmann::json& j,
                    const std::vector<std::string>& allowed,
                    const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
            throw Error("ParameterSpace: unknown field '" + it.key() + "' in " + where);
        }
    }
}

} // namespace

ParameterSpace ParameterSpace::from_json(const nlohmann::json& j) {
    reject_unknown(j, {"objects"}, "parameter space");
    if (!j.contains("objects") || !j["objects"].is_array()) {
        throw Error("ParameterSpace: missing 'objects' array");
    }
    std::vector<ObjectSpec> objects;
    for (const auto& jo : j["objects"]) {
        reject_unknown(jo, {"id", "name", "class", "bounds"}, "object");
        const int id = jo.at("id").get<int>();
        const std::string name = jo.at("name").get<std::string>();
        const MaterialClass mc = class_from_string(jo.at("class").get<std::string>());
        const auto& b = jo.at("bounds");
        if (mc == MaterialClass::Rigid) {
            reject_unknown(b, {"mass"}, "rigid bounds");
            auto m = bounds_pair(b, "mass");
            objects.push_back(ObjectSpec::rigid(id, name, m[0], m[1]));
        } else {
            reject_unknown(b, {"youngs_modulus", "poisson_ratio"}, "deformable bounds");
            auto e = bounds_pair(b, "youngs_modulus");
            auto nu = bounds_pair(b, "poisson_ratio");
            objects.push_back(ObjectSpec::deformable(id, name, e[0], e[1], nu[0], nu[1]));
        }
    }
    return ParameterSpace(std::move(objects));
}

nlohmann::json ParameterSpace::to_json() const {
    nlohmann::json out;
    out["objects"] = nlohmann::json::array();
    for (const ObjectSpec& o : objects_) {
        nlohmann::json jo;
        jo["id"] = o.id;
        jo["name"] = o.name;
        nlohmann::json b;
        if (o.material_class == MaterialClass::Rigid) {
            jo["class"] = "rigid";
            b["mass"] = {o.dims[0].lower, o.dims[0].upper};
        } else {
            jo["class"] = "deformable";
            b["youngs_modulus"] = {o.dims[0].lower, o.dims[0].upper};
            b["poisson_ratio"] = {o.dims[1].lower, o.dims[1].upper};
        }
        jo["bounds"] = b;
        out["objects"].push_back(jo);
    }
    return out;
}

} // namespace sumgp
