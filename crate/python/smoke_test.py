"""Smoke test for the gaugeframe Python extension.

Build first:

    cargo build --release -p gaugeframe-python --features extension-module

The script copies the built library next to itself as ``gaugeframe.so``
(unless one is already importable) and exercises the bindings.
"""

import math
import pathlib
import shutil
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load():
    try:
        import gaugeframe

        return gaugeframe
    except ImportError:
        pass
    for profile in ("release", "debug"):
        lib = ROOT / "target" / profile / "libgaugeframe_py.so"
        if lib.exists():
            break
    else:
        sys.exit("no built extension found; run the cargo build above")
    dest = pathlib.Path(tempfile.mkdtemp()) / "gaugeframe.so"
    shutil.copy(lib, dest)
    sys.path.insert(0, str(dest.parent))
    import gaugeframe

    return gaugeframe


def close(a, b, tol):
    assert abs(a - b) <= tol, f"{a} != {b} (tol {tol})"


def main():
    gf = load()

    particle = gf.Model("particle", d=1, m=1.0)
    assert particle.frame_names() == ["K0", "K1"]
    k0 = particle.frame("K0")
    z = k0.complete([0.0, -1.0, 0.0, 0.0])
    close(z[3], -math.sqrt(2.0), 1e-14)
    landed = k0.flow_to_cut(2.0, z)
    for got, want in zip(landed, [-math.sqrt(2.0), -1.0, 2.0, -math.sqrt(2.0)]):
        close(got, want, 1e-10)
    close(k0.reduced_hamiltonian(0.0, [0.3, -1.5]), math.sqrt(1.5**2 + 1.0), 1e-12)
    close(k0.observable("K1", 2.0, z), -math.sqrt(2.0), 1e-10)

    s, points, residuals = k0.orbit(z, -1.0, 1.0, 5)
    assert len(s) == len(points) == len(residuals) == 5
    assert max(residuals) < 1e-9

    times, states = k0.evolve([0.2, -1.5], 0.0, 1.0, 11)
    assert len(times) == 11
    close(states[-1][1], -1.5, 1e-12)

    k1 = particle.frame("K1", offset=0.5)
    fmap = gf.FrameMap(k0, k1, 0.0, 1.0)
    image = fmap.apply([0.2, -1.5])
    back = fmap.inverse().apply(image)
    close(back[0], 0.2, 1e-9)
    close(back[1], -1.5, 1e-9)
    h_a, h_b = fmap.hamiltonians([0.2, -1.5])
    assert h_a >= h_b

    kepler = gf.Model("kepler", m=1.0, alpha=1.0, energy=0.5)
    phi = kepler.frame("phi")
    close(phi.reduced_hamiltonian(0.0, [2.0, 0.0]), 2.0 * math.sqrt(1.0 + 1.0), 1e-12)

    try:
        gf.Model("particle", d=0)
    except gf.ConfigurationError:
        pass
    else:
        raise AssertionError("d = 0 accepted")
    try:
        k1.embed(0.0, [0.2, 1.5])
    except gf.GaugeError:
        pass
    else:
        raise AssertionError("off-branch point accepted")

    scenario = gf.Scenario(
        '[model]\nkind = "toy"\n\n[run]\ncommand = "verify"\n'
    )
    assert scenario.command == "verify"
    again = gf.Scenario(scenario.to_toml())
    assert again.to_toml() == scenario.to_toml()
    checks = scenario.verify()
    assert checks and all(c["pass"] for c in checks), checks
    with tempfile.TemporaryDirectory() as out:
        artifacts, code = scenario.run(out)
        assert code == 0
        assert [p.name for p in map(pathlib.Path, artifacts)] == ["report.json"]

    print(f"gaugeframe {gf.__version__}: smoke test passed ({len(checks)} checks)")


if __name__ == "__main__":
    main()
