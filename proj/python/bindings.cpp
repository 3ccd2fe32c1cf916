#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sbd/analysis.hpp"
#include "sbd/cftp.hpp"
#include "sbd/core.hpp"
#include "sbd/engine.hpp"
#include "sbd/models.hpp"
#include "sbd/noise.hpp"

namespace py = pybind11;
using namespace sbd;

namespace {

using Coords = std::vector<double>;
using PointList = std::vector<Coords>;

Configuration to_config(const PointList& pts) {
  Configuration eta;
  for (const auto& p : pts) eta.add(Point(std::span<const double>(p)));
  return eta;
}

PointList from_config(const Configuration& eta) {
  PointList out;
  for (const Point& p : eta.sorted_points()) out.emplace_back(p.coords().begin(), p.coords().end());
  return out;
}

const RateModel& checked(const RateModel& model, const SpaceSpec& space) {
  model.validate(space);
  return model;
}

DeathSpec death_from(double rate) {
  if (rate == 1.0) return UnitDeath{};
  return ConstantDeath{rate};
}

py::dict table_dict(const DistributionTable& t) {
  py::dict d;
  for (const auto& [k, p] : t.probabilities()) d[py::tuple(py::cast(k))] = p;
  return d;
}

DistributionTable dict_table(const py::dict& d) {
  DistributionTable t;
  for (const auto& [k, v] : d) t.set(k.cast<std::vector<int>>(), v.cast<double>());
  return t;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Spatial birth-death processes: exact simulation and perfect sampling";

  py::register_exception<InvalidInput>(m, "InvalidInput", PyExc_ValueError);
  py::register_exception<UnsupportedModel>(m, "UnsupportedModel", PyExc_NotImplementedError);

  py::class_<SpaceSpec>(m, "SpaceSpec")
      .def(py::init([](std::vector<double> lengths, bool periodic, double intensity, int resolution) {
             SpaceSpec s;
             s.d = static_cast<int>(lengths.size());
             s.lengths = std::move(lengths);
             s.boundary = periodic ? Boundary::Periodic : Boundary::Free;
             s.beta_intensity = intensity;
             s.quadrature_resolution = resolution;
             s.validate();
             return s;
           }),
           py::arg("lengths") = std::vector<double>{1.0}, py::arg("periodic") = true,
           py::arg("intensity") = 1.0, py::arg("quadrature_resolution") = 256)
      .def_readonly("dimension", &SpaceSpec::d)
      .def_readonly("lengths", &SpaceSpec::lengths)
      .def_readonly("intensity", &SpaceSpec::beta_intensity)
      .def_property_readonly("volume", &SpaceSpec::volume);

  py::class_<RateModel>(m, "RateModel")
      .def_property_readonly("death_rate", &RateModel::death_constant)
      .def_property_readonly("nondecreasing", &RateModel::nondecreasing)
      .def_property_readonly("has_energy", &RateModel::has_energy);

  m.def("constant", [](double lambda0, double death) { return RateModel(ConstantRate{lambda0}, death_from(death)); },
        py::arg("lambda0") = 1.0, py::arg("death_rate") = 1.0);
  m.def("pairwise", [](double theta, double range, double death) {
        return RateModel(PairwiseRate{theta, range}, death_from(death));
      },
        py::arg("theta"), py::arg("range"), py::arg("death_rate") = 1.0);
  m.def("cell_pairwise", [](double theta, int cells, std::vector<double> coupling, double death) {
        return RateModel(CellPairwiseRate{theta, cells, std::move(coupling)}, death_from(death));
      },
        py::arg("theta"), py::arg("cells"), py::arg("coupling"), py::arg("death_rate") = 1.0);
  m.def("area_interaction", [](double rho, double gamma, double radius, int qmc_points, double death) {
        return RateModel(AreaInteractionRate{rho, gamma, radius, qmc_points}, death_from(death));
      },
        py::arg("rho"), py::arg("gamma"), py::arg("grain_radius"), py::arg("qmc_points") = 4096,
        py::arg("death_rate") = 1.0);
  m.def("nearest_neighbor", [](std::vector<double> knots, std::vector<double> values, double at_inf, double death) {
        return RateModel(NearestNeighborRate{std::move(knots), std::move(values), at_inf}, death_from(death));
      },
        py::arg("knots"), py::arg("values"), py::arg("at_infinity"), py::arg("death_rate") = 1.0);

  m.def("birth_rate", [](const RateModel& model, const SpaceSpec& space, const Coords& x, const PointList& eta) {
        return birth_rate(checked(model, space), space, Point(std::span<const double>(x)), to_config(eta));
      });
  m.def("envelope_bound", [](const RateModel& model, const SpaceSpec& space) {
    return envelope_bound(checked(model, space), space);
  });
  m.def("contraction_constant", [](const RateModel& model, const SpaceSpec& space) {
    const ContractionEstimate e = contraction_constant(checked(model, space), space);
    return py::make_tuple(e.value, e.error);
  });
  m.def("energy", [](const RateModel& model, const SpaceSpec& space, const PointList& eta) {
    return energy(checked(model, space), space, to_config(eta));
  });

  m.def("simulate",
        [](const RateModel& model, const SpaceSpec& space, const PointList& initial, double horizon, std::uint64_t seed) {
          const NoiseStream stream = NoiseStream::for_model(seed, checked(model, space), space);
          const Trajectory t = simulate(model, space, initial_clocks(to_config(initial), seed), horizon, stream);
          py::list events;
          for (const Event& e : t.events) {
            events.append(py::make_tuple(e.time, e.kind == EventKind::Birth ? "birth" : "death", e.id,
                                         Coords(e.location.coords().begin(), e.location.coords().end())));
          }
          py::dict out;
          out["events"] = events;
          out["final"] = from_config(t.final.configuration());
          return out;
        },
        py::arg("model"), py::arg("space"), py::arg("initial"), py::arg("horizon"), py::arg("seed"));

  m.def("perfect_sample",
        [](const RateModel& model, const SpaceSpec& space, std::uint64_t seed, double T0, double T_max) {
          const PerfectSample s = perfect_sample(checked(model, space), space, seed, T0, T_max);
          py::dict out;
          out["configuration"] = from_config(s.configuration);
          out["T_used"] = s.T_used;
          out["coalesced"] = s.status == SampleStatus::Coalesced;
          return out;
        },
        py::arg("model"), py::arg("space"), py::arg("seed"), py::arg("T0") = 1.0, py::arg("T_max") = 1024.0);

  m.def("minimal_stationary_sample", [](const RateModel& model, const SpaceSpec& space, std::uint64_t seed,
                                        double horizon) {
    return from_config(minimal_stationary_sample(checked(model, space), space, seed, horizon));
  });
  m.def("maximal_stationary_sample", [](const RateModel& model, const SpaceSpec& space, std::uint64_t seed,
                                        double horizon, double anchor) {
    return from_config(maximal_stationary_sample(checked(model, space), space, seed, horizon, anchor));
  },
        py::arg("model"), py::arg("space"), py::arg("seed"), py::arg("horizon"), py::arg("anchor") = 0.0);

  m.def("oracle_stationary", [](const RateModel& model, const SpaceSpec& space, int cells, std::vector<int> caps) {
    const OracleSolution s = oracle_stationary(oracle_from_model(checked(model, space), space, cells, caps));
    py::dict out;
    out["table"] = table_dict(s.table);
    out["truncation_defect"] = s.truncation_defect;
    out["balance_residual"] = s.balance_residual;
    return out;
  });
  m.def("gibbs_table", [](const RateModel& model, const SpaceSpec& space, int cells, std::vector<int> caps) {
    const OracleModel o = oracle_from_model(checked(model, space), space, cells, caps);
    return table_dict(gibbs_table(o.masses, o.caps, oracle_energy(model, space, cells)));
  });
  m.def("tv_distance", [](const py::dict& p, const py::dict& q) { return tv_distance(dict_table(p), dict_table(q)); });

  m.def("mecke_test",
        [](const SpaceSpec& space, double intensity, bool empty_indicator, std::vector<double> lo,
           std::vector<double> hi, int replicates, std::uint64_t seed) {
          const MeckeResult r = mecke_test(space, intensity,
                                           empty_indicator ? MeckeFunctional::EmptyIndicator : MeckeFunctional::Indicator,
                                           Box{std::move(lo), std::move(hi)}, replicates, seed);
          return py::make_tuple(r.lhs, r.rhs, r.std_error);
        },
        py::arg("space"), py::arg("intensity"), py::arg("empty_indicator"), py::arg("lo"), py::arg("hi"),
        py::arg("replicates"), py::arg("seed"));
  m.def("exponential_ks_test", [](const std::vector<double>& sample, double rate) {
    const KsResult r = exponential_ks_test(sample, rate);
    return py::make_tuple(r.statistic, r.p_value, r.status == TestStatus::Conclusive);
  });
  m.def("chi_square_poisson", [](const std::vector<int>& counts, double mean) {
    const ChiSquareResult r = chi_square_poisson(counts, mean);
    return py::make_tuple(r.statistic, r.dof, r.p_value);
  });
  m.def("ripley_k", [](const std::vector<PointList>& samples, const SpaceSpec& space, const std::vector<double>& radii) {
    std::vector<Configuration> cs;
    for (const auto& s : samples) cs.push_back(to_config(s));
    std::vector<double> out;
    for (const auto& row : ripley_k(cs, space, radii).rows) out.push_back(row.k);
    return out;
  });
}
