#include "textheads/synth.hpp"

#include <algorithm>
#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "textheads/error.hpp"
#include "textheads/rng.hpp"

namespace textheads {

namespace {

constexpr std::array<std::string_view, 12> kMarkers{"诈骗", "盗窃", "抢劫", "贩毒", "赌博", "走私",
                                                    "受贿", "敲诈", "勒索", "殴打", "伪造", "绑架"};
constexpr std::array<std::string_view, 10> kCivil{"合同", "租赁", "婚姻", "继承", "借款",
                                                  "赔偿", "劳动", "房屋", "买卖", "抚养"};
constexpr std::array<std::string_view, 8> kSurnames{"张", "王", "李", "赵", "刘", "陈", "杨", "黄"};
constexpr std::array<std::string_view, 6> kOpenings{"经审理查明", "本院认为", "原告诉称",
                                                    "被告辩称", "经查", "庭审中"};
constexpr std::string_view kFillerSource =
    "的一是在了不和有大这主中人上为们地个用工时要动国产以我到他会作来分生对于学下级就年阶义发成部民可出能方进同行面说种"
    "过命度革而多子后自社加小机也经力线本电高量长党得实家定深法表着水理化争现所二起政三好十战无农使性前等反体合斗路图把"
    "结第里正新开论之物从当两些还天资事队批如应形想制心样干都向变关点育重其思与间内去因件日利相由压员气业代全组数果期导"
    "平各基或月毛然问比展那它最及外没看治提五解系林者米群头意只明四道马认次文通但条较克又公孔领军流入接席位情运器并飞原"
    "油放立题质指建区验活众很教决特此常石强极土少已根共直团统式转别造切九你取西持总料连任志观调七么山程百报更见必真保热"
    "委手改管处己将修支识病象几先老光专什六型具示复安带每东增则完风回南广劳轮科北打积车计给节做务被整联步类集号列温装即"
    "毫知轴研单色坚据速防史拉世设达尔场织历花受求传口断况采精金界品判参层止边清至万确究书术状厂须离再目海交权且儿青才证"
    "低越际八试规斯近注办布门铁需走议县兵固除般引齿千胜细影济白格效置推空配刀叶率述今选养德话查差半敌始片施响收华觉备名"
    "红续均药标记难存测士身紧液派准斤角降维板许破述技消底床田势端感往神便贺村构照容非搞亚磨族火段算适讲按值美态黄易彪服"
    "早班麦削信排台声该击素张密害侯草何树肥继右属市严径螺检左页抗苏显苦英快称坏移约巴材省黑武培著河帝仅针怎植京助升王眼"
    "她抓含苗副杂普谈围食射源例致酸旧却充足短划剂宣环落首尺波承粉践府鱼随考刻靠够满夫失包住促枝局菌杆周护岩师举曲春元超"
    "负砂封换太模贫减阳扬江析亩木言球朝医校古呢稻宋听唯输滑站另卫字鼓刚写刘微略范供阿块某功套友限项余倒卷创律雨让骨远帮"
    "初皮播优占死毒圈伟季训控激找叫云互跟裂粮粒母练塞钢顶策双留误础吸阻故寸盾晚丝女散焊功株亲院冷彻弹错散商视艺灭版烈零"
    "室轻血倍缺厘泵察绝富城冲喷壤简否柱李望盘磁雄似困巩益洲脱投送奴侧润盖挥距触星松送获兴独官混纪依未突架宽冬章湿偏纹吃"
    "执阀矿寨责熟稳夺硬价努翻奇甲预职评读背协损棉侵灰虽矛厚罗泥辟告卵箱掌氧恩爱停曾溶营终纲孟钱待尽俄缩沙退陈讨奋械载胞"
    "幼哪剥迫旋征槽倒握担仍呀鲜吧卡粗介钻逐弱脚怕盐末阴丰雾冠丙街莱贝辐肠付吉渗瑞惊顿挤秒悬姆烂森糖圣凹陶词迟蚕亿矩";

std::vector<std::string> utf8_chars(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        const auto lead = static_cast<unsigned char>(text[i]);
        std::size_t len = 1;
        if (lead >= 0xF0) {
            len = 4;
        } else if (lead >= 0xE0) {
            len = 3;
        } else if (lead >= 0xC0) {
            len = 2;
        }
        out.emplace_back(text.substr(i, len));
        i += len;
    }
    return out;
}

// Filler characters, excluding anything that appears in a marker so that
// label-0 texts cannot contain marker characters by accident.
const std::vector<std::string>& filler_pool() {
    static const std::vector<std::string> pool = [] {
        std::vector<std::string> banned;
        for (std::string_view marker : kMarkers) {
            for (std::string& c : utf8_chars(marker)) {
                banned.push_back(std::move(c));
            }
        }
        std::vector<std::string> out;
        for (std::string& c : utf8_chars(kFillerSource)) {
            if (std::find(banned.begin(), banned.end(), c) == banned.end() &&
                std::find(out.begin(), out.end(), c) == out.end()) {
                out.push_back(std::move(c));
            }
        }
        return out;
    }();
    return pool;
}

template <std::size_t N>
std::string_view pick(const std::array<std::string_view, N>& items, Rng& rng) {
    return items[rng.below(N)];
}

std::string filler(Rng& rng, std::size_t count) {
    const auto& pool = filler_pool();
    std::string out;
    for (std::size_t i = 0; i < count; ++i) {
        out += pool[rng.below(pool.size())];
    }
    return out;
}

std::string make_text(bool positive, Rng& rng) {
    std::vector<std::string> pieces;
    pieces.emplace_back(pick(kOpenings, rng));
    pieces.push_back(std::string(pick(kSurnames, rng)) + "某");
    const std::size_t civil = rng.below(3);
    for (std::size_t i = 0; i < civil; ++i) {
        pieces.emplace_back(pick(kCivil, rng));
    }
    if (positive) {
        const std::size_t markers = 1 + rng.below(2);
        for (std::size_t i = 0; i < markers; ++i) {
            pieces.emplace_back(pick(kMarkers, rng));
        }
    }
    const std::size_t filler_chars = 10 + rng.below(21);
    std::size_t remaining = filler_chars;
    const std::size_t chunks = 2 + rng.below(3);
    for (std::size_t i = 0; i < chunks && remaining > 0; ++i) {
        const std::size_t take = i + 1 == chunks ? remaining : std::min(remaining, 1 + rng.below(remaining));
        pieces.push_back(filler(rng, take));
        remaining -= take;
    }
    if (remaining > 0) {
        pieces.push_back(filler(rng, remaining));
    }
    // Keep the opening in front, scatter everything else.
    std::vector<std::string> body(pieces.begin() + 1, pieces.end());
    rng.shuffle(body);
    std::string text = pieces.front() + "，";
    for (const std::string& piece : body) {
        text += piece;
    }
    text += "。";
    return text;
}

}  // namespace

Dataset generate_synthetic(std::size_t n, std::uint64_t seed) {
    if (n < 10) {
        throw ParameterError("gen-synth needs n >= 10, got " + std::to_string(n));
    }
    Rng rng(seed);
    std::vector<int> labels(n, 0);
    std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n / 2), 1);
    rng.shuffle(labels);
    Dataset out;
    out.reserve(n);
    for (int label : labels) {
        out.push_back({label, make_text(label == 1, rng)});
    }
    return out;
}

void write_synthetic(std::size_t n, std::uint64_t seed, const std::filesystem::path& out) {
    save_dataset(out, generate_synthetic(n, seed));
}

}  // namespace textheads
