"""
MOOSS: graph-masked temporal contrastive representation learning at desk scale.

Subpackages:
    core: tensors and autodiff, optimizer, masking graph, encoder, decoder, loss
    env: moving-dot environment and replay buffer
"""
