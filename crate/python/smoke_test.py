"""Smoke test for the lacepy extension module."""

import math

import lacepy


def main():
    k = lacepy.StepKernel.uniform_cube(1, 2)
    assert len(k) == 5
    assert abs(k.dhat([math.pi / 2]) + 0.2) < 1e-15
    assert k.check_assumption_d()["global_pass"]

    srw = lacepy.Provider.srw(k)
    st = srw.run(0.5, 20, [[0.0], [1.0]])
    want = (0.5 * k.dhat([1.0])) ** 20
    assert abs(st.f(20, 1) - want) < 1e-15
    assert st.lapf0[3] == -3 * 0.5**3 * k.sigma_sq

    syn = lacepy.Provider.synthetic(k, 0.1)
    zc = syn.solve_zc(50)["z_c"]
    assert abs(zc - (-1 + math.sqrt(1.4)) / 0.2) < 1e-9

    saw = lacepy.Provider.saw(lacepy.StepKernel.uniform_cube(2, 1, True), 4)
    assert saw.g(2, [0.0, 0.0], 1.0) == -1 / 8

    assert lacepy.dirichlet_qhat(4, [0.0]) == 1.0
    probe = lacepy.conv_bound_probe(3.0, 3.0, 100)
    assert probe["regime"] == "both-above-two"

    try:
        lacepy.StepKernel.uniform_cube(1, 1).dhat([4.0])
    except ValueError:
        pass
    else:
        raise AssertionError("k outside the torus accepted")
    print("lacepy smoke test passed")


if __name__ == "__main__":
    main()
