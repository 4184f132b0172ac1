import warnings

import pytest

warnings.filterwarnings("ignore", message=".*TBB.*")


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile the jit kernels once so no timed test pays for compilation."""
    from dtk import kernels

    kernels.warm_up()


@pytest.fixture(scope="session")
def cifar10_dir(tmp_path_factory):
    """Full-size synthetic CIFAR-10-format directory, shared across tests."""
    from helpers import write_cifar10_dir

    dest = tmp_path_factory.mktemp("cifar10")
    write_cifar10_dir(dest, seed=0)
    return dest
