"""Per-CPU runqueues: bitmap priority arrays and the best-effort fair queue."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Optional

from .model import (
    BEST_EFFORT_PARTITION,
    MAX_PARTITIONS,
    MAX_RT_PRIO,
    SYSTEM_PARTITION,
    TaskControlBlock,
    is_application_partition,
)


def prio_index(priority: int) -> int:
    """Queue index for a priority; index 0 is the most urgent level."""
    return MAX_RT_PRIO - 1 - priority


class PriorityQueue:
    """FIFO lists indexed by priority with a find-first-set bitmap."""

    def __init__(self):
        self.queues: list[deque[TaskControlBlock]] = [deque() for _ in range(MAX_RT_PRIO)]
        self.bitmap = 0

    def __len__(self) -> int:
        return sum(len(q) for q in self.queues)

    def __contains__(self, task: TaskControlBlock) -> bool:
        return task in self.queues[prio_index(task.priority)]

    def first_index(self, start: int = 0) -> int:
        """First occupied index at or after ``start``; MAX_RT_PRIO if none."""
        bits = self.bitmap >> start
        if not bits:
            return MAX_RT_PRIO
        return start + (bits & -bits).bit_length() - 1

    def enqueue(self, task: TaskControlBlock, head: bool = False) -> None:
        idx = prio_index(task.priority)
        if head:
            self.queues[idx].appendleft(task)
        else:
            self.queues[idx].append(task)
        self.bitmap |= 1 << idx

    def remove(self, task: TaskControlBlock) -> None:
        idx = prio_index(task.priority)
        self.queues[idx].remove(task)
        if not self.queues[idx]:
            self.bitmap &= ~(1 << idx)

    def requeue_tail(self, task: TaskControlBlock) -> None:
        self.remove(task)
        self.enqueue(task)

    def tasks(self):
        for q in self.queues:
            yield from q


class FairQueue:
    """Simplified virtual-runtime queue for best-effort tasks."""

    def __init__(self):
        self._tasks: list[TaskControlBlock] = []

    def __len__(self) -> int:
        return len(self._tasks)

    def __contains__(self, task: TaskControlBlock) -> bool:
        return task in self._tasks

    def enqueue(self, task: TaskControlBlock) -> None:
        if self._tasks:
            task.vruntime = max(task.vruntime, min(t.vruntime for t in self._tasks))
        self._tasks.append(task)

    def remove(self, task: TaskControlBlock) -> None:
        self._tasks.remove(task)

    def pick(self) -> Optional[TaskControlBlock]:
        if not self._tasks:
            return None
        # min() keeps the first of equal keys, i.e. queue order
        return min(self._tasks, key=lambda t: t.vruntime)

    def tasks(self):
        return iter(self._tasks)


class RunQueueSet:
    def __init__(self, cpu: int):
        self.cpu = cpu
        self.partition_queues = [PriorityQueue() for _ in range(MAX_PARTITIONS + 1)]
        self.system_queue = PriorityQueue()
        self.best_effort_queue = FairQueue()
        self.current_task: Optional[TaskControlBlock] = None

    def queue_for(self, partition: int):
        if partition == SYSTEM_PARTITION:
            return self.system_queue
        if partition == BEST_EFFORT_PARTITION:
            return self.best_effort_queue
        if is_application_partition(partition):
            return self.partition_queues[partition]
        return None

    def enqueue(self, task: TaskControlBlock) -> None:
        self.queue_for(task.partition).enqueue(task)

    def remove(self, task: TaskControlBlock) -> None:
        self.queue_for(task.partition).remove(task)


@dataclass
class PickStats:
    calls: int = 0
    touched: int = 0
    last_touched: int = 0


def pick_next_task(rq: RunQueueSet, partition: int, cap_enabled: bool, window_start: int,
                   stats: Optional[PickStats] = None):
    """Return ``(index, task)`` for the given partition queue of ``rq``.

    ``index`` is the queue index of the chosen level (0 most urgent) or
    MAX_RT_PRIO when nothing is eligible. With the cap enabled, a task
    disabled before ``window_start`` is re-enabled and chosen; one disabled
    in the current window is skipped. If every task is disabled, an
    application queue still yields its most urgent task while the system
    queue yields nothing.
    """
    queue = rq.queue_for(partition)
    touched = 0
    try:
        if not isinstance(queue, PriorityQueue):
            return MAX_RT_PRIO, None
        next_index, next_task = MAX_RT_PRIO, None
        index = queue.first_index(0)
        while index < MAX_RT_PRIO:
            runlist = queue.queues[index]
            if next_task is None:
                next_task, next_index = runlist[0], index
            if not cap_enabled:
                touched += 1
                return next_index, next_task
            for task in runlist:
                touched += 1
                if not task.disabled:
                    return index, task
                if task.last_disabled_time < window_start:
                    task.disabled = False
                    return index, task
            index = queue.first_index(index + 1)
        if partition == SYSTEM_PARTITION:
            return MAX_RT_PRIO, None
        return next_index, next_task
    finally:
        if stats is not None:
            stats.calls += 1
            stats.touched += touched
            stats.last_touched = touched
