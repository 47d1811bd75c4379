from .adam import AdamState, adam_step
from .gradcheck import gradient_check
from .ops import (
    LayerGrad,
    conv3d,
    conv3d_grad,
    dense,
    dense_grad,
    dropout,
    dropout_grad,
    glorot_uniform,
    maxpool3d,
    maxpool3d_grad,
    relu,
    relu_grad,
    softmax,
    softmax_xent,
    softmax_xent_grad,
)
