# -*- coding: utf-8 -*-
"""
Графики: кривая потерь обучения и столбчатая диаграмма метрик.
Рисуются без GUI (бэкенд Agg) и сохраняются в PNG.
"""

import logging
from pathlib import Path
from typing import Dict, List, Sequence, Union

import matplotlib
matplotlib.use('Agg')
from matplotlib.figure import Figure

from stats.metrics import MetricsReport

logger = logging.getLogger('SGNN.Stats')

_LEVEL_COLORS = ['#28a745', '#17a2b8', '#6f42c1', '#fd7e14', '#dc3545', '#343a40']


def _style_axes(ax) -> None:
    ax.set_facecolor('#f8f9fa')
    ax.grid(True, linestyle='--', alpha=0.3, axis='y')
    ax.spines['top'].set_visible(False)
    ax.spines['right'].set_visible(False)
    ax.spines['left'].set_linewidth(0.5)
    ax.spines['bottom'].set_linewidth(0.5)


def plot_loss_curve(history: Sequence[Dict[str, float]], out_path: Union[str, Path],
                    n_level: int = 0) -> Path:
    """
    Кривая суммарной потери по итерациям (логарифмическая шкала) с отметками
    включения уровней.

    Args:
        history: Записи журнала с ключами iteration, active_levels, total
        out_path: Файл PNG
        n_level: Период включения уровней (0 = без отметок)
    """
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig = Figure(figsize=(7, 3.5), dpi=90)
    fig.patch.set_facecolor('white')
    ax = fig.add_subplot(111)
    _style_axes(ax)

    its = [int(r['iteration']) for r in history]
    totals = [float(r['total']) for r in history]
    if its:
        ax.plot(its, totals, color='#2c3e50', linewidth=0.8, label='total')
        finals = [(int(r['iteration']), float(r['final'])) for r in history
                  if r.get('final') not in (None, '')]
        if finals:
            ax.plot(*zip(*finals), color=_LEVEL_COLORS[0], linewidth=0.8, label='final')
        if min(totals) > 0:
            ax.set_yscale('log')
        levels = sorted({int(r['active_levels']) for r in history})
        for lvl in levels[1:]:
            start = min(int(r['iteration']) for r in history if int(r['active_levels']) == lvl)
            ax.axvline(start, color=_LEVEL_COLORS[lvl % len(_LEVEL_COLORS)], linestyle=':',
                       linewidth=1.0)
        ax.legend(fontsize=8, frameon=False)

    ax.set_xlabel('Итерация', fontsize=10, fontweight='bold', labelpad=8)
    ax.set_ylabel('Потеря', fontsize=10, fontweight='bold', labelpad=8)
    ax.set_title(f'Кривая обучения (итераций: {len(its)})', fontsize=12, fontweight='bold', pad=10)
    fig.tight_layout(pad=2.0)
    fig.savefig(out_path)
    logger.info(f"Кривая потерь сохранена: {out_path}")
    return out_path


def plot_metrics(reports: Dict[str, MetricsReport], out_path: Union[str, Path]) -> Path:
    """Столбчатая диаграмма четырёх l1-метрик для одного или нескольких отчётов."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    names = ['весь объём', 'ненаблюдаемое', 'цель', 'предсказание']
    fig = Figure(figsize=(7, 3.5), dpi=90)
    fig.patch.set_facecolor('white')
    ax = fig.add_subplot(111)
    _style_axes(ax)

    n = max(len(reports), 1)
    width = 0.7 / n
    for i, (label, rep) in enumerate(reports.items()):
        values: List[float] = [rep.l1_entire_volume, rep.l1_unobserved,
                               rep.l1_target, rep.l1_predicted]
        xs = [j + (i - (n - 1) / 2) * width for j in range(len(names))]
        bars = ax.bar(xs, values, width=width, color=_LEVEL_COLORS[i % len(_LEVEL_COLORS)],
                      edgecolor='#343a40', linewidth=0.5, alpha=0.8, label=label)
        for bar, v in zip(bars, values):
            ax.text(bar.get_x() + bar.get_width() / 2., bar.get_height(), f'{v:.3f}',
                    ha='center', va='bottom', fontsize=8)

    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, fontsize=9)
    ax.set_ylabel('l1, вокселей', fontsize=10, fontweight='bold', labelpad=8)
    ax.set_title('Ошибки завершения', fontsize=12, fontweight='bold', pad=10)
    if len(reports) > 1:
        ax.legend(fontsize=8, frameon=False)
    fig.tight_layout(pad=2.0)
    fig.savefig(out_path)
    logger.info(f"Диаграмма метрик сохранена: {out_path}")
    return out_path
