import re
from pathlib import Path

import pytest

from chargeplan.agent import TrainConfig
from chargeplan.config import dump_params, load_config
from chargeplan.utility import ChargerCatalog, UtilityParams

README = Path(__file__).resolve().parents[1] / "README.md"


def test_no_file_gives_defaults():
    assert load_config(None) == (UtilityParams(), TrainConfig())


def test_readme_parameter_file_is_the_defaults(tmp_path):
    text = README.read_text()
    block = re.search(r"```toml\n(.*?)```", text, re.S).group(1)
    (tmp_path / "p.toml").write_text(block)
    params, tcfg = load_config(tmp_path / "p.toml")
    assert params == UtilityParams()
    assert tcfg == TrainConfig()


def test_partial_file_and_train_table(tmp_path):
    (tmp_path / "p.toml").write_text("lambda = 0.7\ncharger_cost = [1, 2, 3]\n[train]\nepisodes_max = 9\n")
    params, tcfg = load_config(tmp_path / "p.toml")
    assert params.lam == 0.7 and params.alpha == 0.4
    assert params.catalog == ChargerCatalog((7.0, 22.0, 50.0), (1.0, 2.0, 3.0))
    assert tcfg.episodes_max == 9 and tcfg.batch_size == 128


def test_dump_round_trip(tmp_path):
    params = UtilityParams(lam=0.25, K=4, B=1234.5, arrival_scale=3e-5, rho_target=0.5,
                           catalog=ChargerCatalog((11.0,), (400.0,)))
    (tmp_path / "p.toml").write_text(dump_params(params))
    assert load_config(tmp_path / "p.toml")[0] == params


@pytest.mark.parametrize("text", ["lamda = 0.5\n", "[train]\nepochs = 3\n"])
def test_unknown_keys_rejected(tmp_path, text):
    (tmp_path / "p.toml").write_text(text)
    with pytest.raises(KeyError):
        load_config(tmp_path / "p.toml")


def test_out_of_range_value(tmp_path):
    (tmp_path / "p.toml").write_text("alpha = 1.5\n")
    with pytest.raises(ValueError, match="alpha"):
        load_config(tmp_path / "p.toml")
