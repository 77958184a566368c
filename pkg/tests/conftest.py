import numpy as np
import pytest
import torch

torch.set_num_threads(1)

DULOXETINE = "CNCCC(OC1=CC=CC2=CC=CC=C21)C1=CC=CS1"
ITRACONAZOLE = ("CCC(C)N1N=CN(C1=O)C1=CC=C(C=C1)N1CCN(CC1)C1=CC=C(OCC2COC(CN3C=NC=N3)"
                "(O2)C2=CC=C(Cl)C=C2Cl)C=C1")
PROMAZINE = "CN(C)CCCN1C2=CC=CC=C2SC2=CC=CC=C12"

# 25 molecules for the fragmentation oracle
BRICS_FIXTURE = {
    "duloxetine": DULOXETINE,
    "itraconazole": ITRACONAZOLE,
    "promazine": PROMAZINE,
    "methane": "C",
    "ethanol": "CCO",
    "benzene": "c1ccccc1",
    "aspirin": "CC(=O)Oc1ccccc1C(=O)O",
    "paracetamol": "CC(=O)Nc1ccc(O)cc1",
    "ibuprofen": "CC(C)Cc1ccc(cc1)C(C)C(=O)O",
    "caffeine": "Cn1cnc2c1c(=O)n(C)c(=O)n2C",
    "diazepam": "CN1C(=O)CN=C(c2ccccc2)c2cc(Cl)ccc21",
    "warfarin": "CC(=O)CC(c1ccccc1)c1c(O)c2ccccc2oc1=O",
    "fluconazole": "OC(Cn1cncn1)(Cn1cncn1)c1ccc(F)cc1F",
    "ketoconazole": "CC(=O)N1CCN(CC1)c1ccc(OCC2COC(Cn3ccnc3)(O2)c2ccc(Cl)cc2Cl)cc1",
    "omeprazole": "COc1ccc2[nH]c(nc2c1)S(=O)Cc1ncc(C)c(OC)c1C",
    "metformin": "CN(C)C(=N)NC(=N)N",
    "atorvastatin": "CC(C)c1c(C(=O)Nc2ccccc2)c(-c2ccccc2)c(-c2ccc(F)cc2)n1CCC(O)CC(O)CC(=O)O",
    "sildenafil": "CCCc1nn(C)c2c1nc([nH]c2=O)-c1cc(ccc1OCC)S(=O)(=O)N1CCN(C)CC1",
    "ciprofloxacin": "OC(=O)c1cn(C2CC2)c2cc(N3CCNCC3)c(F)cc2c1=O",
    "propranolol": "CC(C)NCC(O)COc1cccc2ccccc12",
    "imatinib": "Cc1ccc(NC(=O)c2ccc(CN3CCN(C)CC3)cc2)cc1Nc1nccc(n1)-c1cccnc1",
    "losartan": "CCCCc1nc(Cl)c(CO)n1Cc1ccc(cc1)-c1ccccc1-c1nnn[nH]1",
    "clopidogrel": "COC(=O)C(c1ccccc1Cl)N1CCc2sccc2C1",
    "lisinopril": "NCCCCC(NC(CCc1ccccc1)C(=O)O)C(=O)N1CCCC1C(=O)O",
    "tolbutamide": "CCCCNC(=O)NS(=O)(=O)c1ccc(C)cc1",
}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


SMALL_CFG = dict(d0=8, hidden=8, heads=2, epochs=2, batch_size=16, patience=5, n_folds=3)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    from ddikit.dataset import load_dataset
    from ddikit.synthetic import SyntheticParams, write_dataset

    root = tmp_path_factory.mktemp("small")
    params = SyntheticParams(n_drugs=40, n_pairs=90, n_pathways=3, proteins_per_pathway=5,
                         n_rare_types=0, seed=3)
    write_dataset(root, params)
    return load_dataset(root)


@pytest.fixture(scope="session")
def small_fold(small_dataset):
    from ddikit.config import TrainConfig
    from ddikit.kgstore import make_folds
    from ddikit.trainer import prepare_fold

    import warnings
    cfg = TrainConfig(**SMALL_CFG)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fold = make_folds(small_dataset.samples, cfg.n_folds, "random", 0, 0.1)[0]
    ds = small_dataset
    return cfg, fold, prepare_fold(ds.kg, fold, ds.mols, ds.subs, ds.n_relations, cfg)


# -- acceptance summary -------------------------------------------------------------

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n, title): numbered acceptance criterion")


def pytest_runtest_logreport(report):
    marker = getattr(report, "acceptance", None)
    if marker is None:
        return
    failed = report.failed or (report.when == "call" and report.skipped)
    prev = _ACCEPTANCE.get(marker, "PASS")
    if report.when == "call" or failed:
        _ACCEPTANCE[marker] = "FAIL" if failed or prev == "FAIL" else "PASS"


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    m = item.get_closest_marker("acceptance")
    if m is not None:
        outcome.get_result().acceptance = (m.args[0], m.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for (n, title), status in sorted(_ACCEPTANCE.items()):
        terminalreporter.write_line(f"criterion {n}: {status}  {title}")
