from .ats import ats_dressing, ats_profile_schedule
from .circuit import build_circuit_hamiltonian, effective_coupling, single_excitation_block
from .floquet import floquet_effective_hamiltonian, modulation_for_target
from .lindblad import collapse_operators, lindblad_evolve, schrodinger_evolve
from .protocol import measure_second_chern, nonadiabatic_curvature
from .spectroscopy import momentum_line, spectroscopy_scan
