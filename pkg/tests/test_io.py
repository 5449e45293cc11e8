import json

import numpy as np
import pytest

from nard.core import nard_fit
from nard.errors import DataError, EmptyInputError, ParseError
from nard.io import RunManifest, load_matrix, load_model, model_document, save_matrix, save_model
from nard.model import AlphaVector, Dataset, FitConfig
from nard.synth import SynthSpec, generate, support


def write(tmp_path, text, name="m.csv"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_load_two_by_two(tmp_path):
    np.testing.assert_array_equal(load_matrix(write(tmp_path, "1,2\n3,4\n")), [[1, 2], [3, 4]])


def test_load_tolerates_spaces_and_missing_newline(tmp_path):
    np.testing.assert_array_equal(load_matrix(write(tmp_path, " 1.5, -2e-3\n3 ,4")), [[1.5, -2e-3], [3, 4]])


def test_empty_file(tmp_path):
    with pytest.raises(EmptyInputError):
        load_matrix(write(tmp_path, ""))
    with pytest.raises(EmptyInputError):
        load_matrix(write(tmp_path, "\n\n"))


def test_ragged_row_reports_line(tmp_path):
    with pytest.raises(ParseError) as exc:
        load_matrix(write(tmp_path, "1,2\n3\n"))
    assert exc.value.line == 2
    assert "line 2" in str(exc.value)


def test_bad_cell_reports_coordinates(tmp_path):
    with pytest.raises(ParseError) as exc:
        load_matrix(write(tmp_path, "1,2\n3,x\n"))
    assert (exc.value.line, exc.value.column) == (2, 2)
    with pytest.raises(ParseError):
        load_matrix(write(tmp_path, "1,nan\n"))


def test_missing_file(tmp_path):
    with pytest.raises(DataError):
        load_matrix(str(tmp_path / "nope.csv"))


def test_matrix_round_trip_is_exact(tmp_path):
    mat = np.random.default_rng(0).standard_normal((4, 3)) * 1e3
    p = str(tmp_path / "a.csv")
    save_matrix(p, mat)
    assert load_matrix(p).tobytes() == mat.tobytes()


@pytest.fixture(scope="module")
def fitted():
    truth = generate(SynthSpec(d=12, m=4, n=40, seed=1))
    data = Dataset(truth.x, truth.y)
    state = nard_fit(data, FitConfig(lam=0.1, max_iter=30),
                     alpha_init=AlphaVector.full(12).with_entry(3, None))
    return state


def test_model_round_trip_bytes(tmp_path, fitted):
    manifest = RunManifest.start("fit", ["fit", "--x", "x.csv"], {"lam": 0.1}).finish()
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    save_model(fitted, str(a), manifest)
    state, man = load_model(str(a))
    save_model(state, str(b), man)
    assert a.read_bytes() == b.read_bytes()
    assert state.w.tobytes() == fitted.w.tobytes()
    assert state.omega.tobytes() == fitted.omega.tobytes()
    assert state.alpha.values.tobytes() == fitted.alpha.values.tobytes()


def test_pruned_alpha_is_inf_string(tmp_path, fitted):
    p = tmp_path / "m.json"
    save_model(fitted, str(p))
    doc = json.loads(p.read_text())
    assert doc["alpha"][3] == "inf"
    assert 3 not in doc["active_indices"]
    state, man = load_model(str(p))
    assert state.alpha.pruned[3] and man is None


def test_omega_support_in_file(tmp_path, fitted):
    doc = model_document(fitted)
    np.testing.assert_array_equal(doc["support"]["Omega"], support(fitted.omega, 0.0, precision=True))
    assert doc["support"]["W_tol"] == 1e-4


def test_trace_survives(tmp_path, fitted):
    p = tmp_path / "m.json"
    save_model(fitted, str(p))
    state, _ = load_model(str(p))
    assert [r.to_dict() for r in state.trace] == [r.to_dict() for r in fitted.trace]


def test_load_model_errors(tmp_path):
    with pytest.raises(ParseError):
        load_model(write(tmp_path, "{not json", "bad.json"))
    with pytest.raises(DataError):
        load_model(write(tmp_path, '{"W": []}', "short.json"))
    with pytest.raises(DataError):
        load_model(str(tmp_path / "missing.json"))


def test_write_failure_names_path(tmp_path, fitted):
    target = tmp_path / "no_such_dir" / "m.json"
    with pytest.raises(DataError, match="no_such_dir"):
        save_model(fitted, str(target))


def test_manifest_dict_round_trip():
    m = RunManifest.start("bench", ["bench"], {"sizes": [1, 2], "x": np.float64(np.inf)}).finish()
    d = m.to_dict()
    assert d["config"]["x"] == "inf" and d["version"]
    assert RunManifest.from_dict(d).to_dict() == d
