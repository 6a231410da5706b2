"""Tests for the dataset CSV format and the versioned model artifact.

The CSV writer uses repr() for covariates so float64 values survive a save /
load round trip bit for bit; malformed files must be rejected with the
offending row and column named.  Artifact JSON is canonical, so
save -> load -> save reproduces the file byte for byte.
"""

import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from pulogit.core_math import CaseControlRatios, SingleTrainingProbs
from pulogit.errors import InvalidConfig, LabelOutOfRange, NonNumericCovariate, ParseError
from pulogit.io import (
    FORMAT_VERSION,
    ModelArtifact,
    load_covariates,
    load_dataset,
    save_dataset,
)
from pulogit.models import MultinomialParams, OrdinalParams, PUDataset
from pulogit.optimizer import SolverConfig, pgd_fit_mn, pgd_fit_on
from pulogit.simulate import SimConfig, case_control_sample, gen_mn_truth, gen_on_truth


def tiny_dataset():
    X = np.array([[1.5, -2.25], [0.125, 3.0], [-0.5, 0.75]])
    return PUDataset(X, np.array([0, 1, 0]), CaseControlRatios([0.5]),
                     y=np.array([0, 1, 1]))


class TestDatasetCsv:
    def test_exact_file_contents(self, tmp_path):
        path = tmp_path / "tiny.csv"
        save_dataset(path, tiny_dataset())
        assert path.read_text() == (
            "z,y,x1,x2\n"
            "0,0,1.5,-2.25\n"
            "1,1,0.125,3.0\n"
            "0,1,-0.5,0.75\n"
        )

    def test_y_column_omitted_without_truth(self, tmp_path):
        data = tiny_dataset()
        path = tmp_path / "noy.csv"
        save_dataset(path, PUDataset(data.X, data.z, data.scenario))
        assert path.read_text().splitlines()[0] == "z,x1,x2"

    def test_round_trip_is_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        cfg = SimConfig(n=40, p=5, K=2, s=2, seed=3)
        data = case_control_sample(gen_mn_truth(cfg), cfg)
        path = tmp_path / "cc.csv"
        save_dataset(path, data)
        back = load_dataset(path, data.scenario)
        assert np.array_equal(back.X, data.X)  # repr round-trips float64 exactly
        assert np.array_equal(back.z, data.z)
        assert np.array_equal(back.y, data.y)

        st = PUDataset(rng.normal(size=(10, 3)), rng.integers(0, 3, size=10),
                       SingleTrainingProbs((0.5, 0.7)))
        path2 = tmp_path / "st.csv"
        save_dataset(path2, st)
        back2 = load_dataset(path2, st.scenario)
        assert np.array_equal(back2.X, st.X)
        assert back2.y is None

    def test_float_formatted_integer_labels_accepted(self, tmp_path):
        path = tmp_path / "f.csv"
        path.write_text("z,x1\n2.0,0.5\n0,1.5\n")
        data = load_dataset(path, CaseControlRatios([1.0, 1.0]))
        assert np.array_equal(data.z, [2, 0])

    def test_fractional_label_rejected(self, tmp_path):
        path = tmp_path / "f.csv"
        path.write_text("z,x1\n0,0.5\n2.5,1.5\n")
        with pytest.raises(LabelOutOfRange, match="row 3"):
            load_dataset(path, CaseControlRatios([1.0, 1.0]))

    def test_label_beyond_class_count_names_row(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("z,x1\n0,0.5\n7,1.5\n1,2.5\n")
        with pytest.raises(LabelOutOfRange, match="row 3.*7"):
            load_dataset(path, CaseControlRatios([1.0, 1.0]))

    def test_non_numeric_covariate_names_row_and_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("z,x1,x2\n0,0.5,1.0\n1,abc,2.0\n")
        with pytest.raises(NonNumericCovariate, match="row 3.*x1.*abc"):
            load_dataset(path, CaseControlRatios([1.0]))

    def test_ragged_row_rejected(self, tmp_path):
        path = tmp_path / "ragged.csv"
        path.write_text("z,x1,x2\n0,0.5,1.0\n1,0.25\n")
        with pytest.raises(ParseError, match="row 3 has 2 fields, expected 3"):
            load_dataset(path, CaseControlRatios([1.0]))

    def test_structural_rejects(self, tmp_path):
        cases = {
            "empty.csv": "",
            "headeronly.csv": "z,x1\n",
            "noz.csv": "y,x1\n0,0.5\n",
            "nocov.csv": "z\n0\n",
        }
        for name, text in cases.items():
            path = tmp_path / name
            path.write_text(text)
            with pytest.raises(ParseError):
                load_dataset(path, CaseControlRatios([1.0]))

    def test_scenario_validation(self, tmp_path):
        path = tmp_path / "ok.csv"
        path.write_text("z,x1\n0,0.5\n")
        with pytest.raises(InvalidConfig):
            load_dataset(path, "case-control")
        with pytest.raises(InvalidConfig):
            load_dataset(path, CaseControlRatios([1.0]), K=3)

    def test_load_covariates_with_and_without_labels(self, tmp_path):
        full = tmp_path / "full.csv"
        full.write_text("z,y,x1\n0,1,0.5\n1,1,1.5\n")
        X, z, y = load_covariates(full)
        assert_allclose(X, [[0.5], [1.5]])
        assert np.array_equal(z, [0, 1]) and np.array_equal(y, [1, 1])

        bare = tmp_path / "bare.csv"
        bare.write_text("x1,x2\n0.5,1.0\n")
        X2, z2, y2 = load_covariates(bare)
        assert X2.shape == (1, 2) and z2 is None and y2 is None


class TestModelArtifact:
    def mn_artifact(self):
        cfg = SimConfig(n=40, p=3, K=2, s=2, seed=5)
        data = case_control_sample(gen_mn_truth(cfg), cfg)
        fit = pgd_fit_mn(data, None, SolverConfig(lam=0.1, tol=1e-8, max_iter=500))
        meta = {"iterations": fit.iterations, "converged": fit.converged,
                "stationarity_gap": fit.stationarity_gap}
        return ModelArtifact.from_fit(fit.params, data, 0.1, "covariate-rows", meta), fit

    def on_artifact(self):
        cfg = SimConfig(n=40, p=3, K=2, s=2, seed=6, pi_st=(0.5, 0.5))
        from pulogit.simulate import single_training_sample

        data = single_training_sample(gen_on_truth(cfg), cfg)
        fit = pgd_fit_on(data, None, SolverConfig(lam=0.05, tol=1e-8, max_iter=500))
        meta = {"iterations": fit.iterations, "converged": fit.converged,
                "stationarity_gap": fit.stationarity_gap}
        return ModelArtifact.from_fit(fit.params, data, 0.05, "entrywise", meta), fit

    def test_from_fit_describes_the_model(self):
        art, fit = self.mn_artifact()
        assert art.kind == "multinomial"
        assert art.scenario["type"] == "case-control"
        assert art.K == 2 and art.p == 3
        assert art.format_version == FORMAT_VERSION
        back = art.to_params()
        assert_allclose(back.Theta, fit.params.Theta, rtol=0, atol=0)
        assert_allclose(back.b, fit.params.b, rtol=0, atol=0)

    def test_scenario_object_round_trip(self):
        art, _ = self.mn_artifact()
        scen = art.scenario_object()
        assert isinstance(scen, CaseControlRatios)
        assert_allclose(scen.kappa, art.scenario["kappa"], rtol=0, atol=0)

        art_on, _ = self.on_artifact()
        scen_on = art_on.scenario_object()
        assert isinstance(scen_on, SingleTrainingProbs)
        assert_allclose(scen_on.pi_st, [0.5, 0.5], rtol=0, atol=0)

    def test_save_load_save_is_byte_identical(self, tmp_path):
        for name, (art, _) in (("mn", self.mn_artifact()), ("on", self.on_artifact())):
            first = tmp_path / f"{name}1.json"
            second = tmp_path / f"{name}2.json"
            art.save(first)
            ModelArtifact.load(first).save(second)
            assert first.read_bytes() == second.read_bytes()

    def test_ordinal_params_round_trip(self):
        art, fit = self.on_artifact()
        back = art.to_params()
        assert isinstance(back, OrdinalParams)
        assert_allclose(back.theta, fit.params.theta, rtol=0, atol=0)
        assert back.p == 3 and back.K == 2

    def test_fit_metadata_survives_round_trip(self, tmp_path):
        art, fit = self.mn_artifact()
        path = tmp_path / "m.json"
        art.save(path)
        back = ModelArtifact.load(path)
        assert back.fit["iterations"] == fit.iterations
        assert back.fit["converged"] is fit.converged
        assert back.fit["stationarity_gap"] == fit.stationarity_gap
        assert back.lam == 0.1

    def test_unknown_version_rejected(self, tmp_path):
        art, _ = self.mn_artifact()
        raw = json.loads(art.to_json())
        raw["format_version"] = 99
        path = tmp_path / "v99.json"
        path.write_text(json.dumps(raw))
        with pytest.raises(ParseError, match="version 99"):
            ModelArtifact.load(path)

    def test_malformed_artifact_rejected(self, tmp_path):
        art, _ = self.mn_artifact()
        raw = json.loads(art.to_json())
        raw.pop("params")
        path = tmp_path / "broken.json"
        path.write_text(json.dumps(raw))
        with pytest.raises(ParseError, match="malformed"):
            ModelArtifact.load(path)

    def test_unsupported_parameter_type_rejected(self):
        cfg = SimConfig(n=20, p=2, K=1, s=1, seed=0)
        data = case_control_sample(gen_mn_truth(cfg), cfg)
        with pytest.raises(InvalidConfig):
            ModelArtifact.from_fit(np.zeros(3), data, 0.1, "entrywise", {})
