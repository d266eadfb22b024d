import pytest

from mat_factories import write_classic_mat, write_hdf5_mat


@pytest.fixture(params=["classic", "hdf5"])
def mat_writer(request):
    return write_classic_mat if request.param == "classic" else write_hdf5_mat
