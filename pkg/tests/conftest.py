import textwrap

import pytest

from loratherm.scenario import parse_scenario_text

BASE = """
[scenario]
name = {name}
start = {start}
timezone_offset_min = 480
duration_h = {duration_h}
seed = {seed}

[forcing]
{forcing}

[link]
shadowing_sigma_db = {sigma}

[material]
name = grass
k_cool = 0.5
solar_gain = 4

[material]
name = red_brick
k_cool = 0.6
solar_gain = 14
probe_coupling = 0.8

[gateway]
id = 216

[gateway]
id = 105
"""

NODE = """
[node]
id = {id}
dev_eui = {eui}
material = {material}
tx_interval = {interval}
enclosure_shaded = {shaded}
registered = {registered}
{links}
"""


def scenario_text(nodes, name="test", start="2018-01-21T00:00", duration_h=2, seed=7, sigma=0.0,
                  forcing="profile = summer", extra=""):
    """Assemble a scenario file. ``nodes`` is a list of dicts with at least ``id``."""
    parts = [BASE.format(name=name, start=start, duration_h=duration_h, seed=seed, sigma=sigma, forcing=forcing)]
    for i, n in enumerate(nodes):
        links = n.get("links", {"216": "100 LOS"})
        parts.append(NODE.format(
            id=n["id"],
            eui=n.get("eui", f"70B3D57ED0{i + 1:06X}"),
            material=n.get("material", "grass"),
            interval=n.get("interval", 2),
            shaded=str(n.get("shaded", True)).lower(),
            registered=str(n.get("registered", True)).lower(),
            links="\n".join(f"gateway.{g} = {v}" for g, v in links.items()),
        ))
    parts.append(textwrap.dedent(extra))
    return "\n".join(parts)


@pytest.fixture
def make_scenario():
    def _make(nodes, **kw):
        return parse_scenario_text(scenario_text(nodes, **kw))
    return _make


@pytest.fixture
def scenario_file(tmp_path):
    def _write(nodes, name="s.ini", **kw):
        p = tmp_path / name
        p.write_text(scenario_text(nodes, **kw))
        return p
    return _write
