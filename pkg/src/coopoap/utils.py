"""Entity factories.

A simulated node is an ECS entity, see `coopoap.compsys` for its
components.

"""
import tinyecs as ecs

from coopoap.compsys import NodeRuntime

__all__ = ['node_entity_factory']


def node_entity_factory(node_id, topology, cfg, rng, eid=None, **kwargs):
    """A macro to create node entities.

    Only the 'node' component is added here.  The 'fsm' component is added
    when the node wakes up and its protocol sets it up.

    Parameters
    ----------
    node_id: str
        The node's id in `topology`.

    topology: Topology
        Provides hop distance, node order and the source.

    cfg: ProtocolConfig
        Provides k.

    rng: numpy.random.Generator
        The node's private random stream.

    eid: hashable
        The eid of the node to setup.  If None, will be created with the
        node id as tag.

    **kwargs:
        All additional key/value pairs will be directly added as
        additional components, with key as the CID and value as the
        component itself.

    Returns
    -------
    EID

    """
    if eid is None:
        eid = ecs.create_entity(node_id)

    node = NodeRuntime(node_id=node_id,
                       hop=topology.hop_of[node_id],
                       index=topology.index[node_id],
                       role='source' if node_id == topology.source else 'relay_or_sink',
                       rng=rng,
                       k=cfg.k)

    ecs.add_component(eid, 'node', node)
    for cid, comp in kwargs.items():
        ecs.add_component(eid, cid, comp)

    return eid
