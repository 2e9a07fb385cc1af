from .chern import (
    chern_form_closed,
    chern_form_field,
    extrapolate_cutoff,
    integrate_reduced,
    second_chern_cutoff_closed,
    second_chern_full4d,
    second_chern_reduced,
    valley_chern,
)
from .curvature import plaquette_curvature, point_curvature, unitary_log
from .frames import BandSubspace, hopf_embed, occupied_frame
from .winding import winding3_sphere
