#pragma once

namespace wukong::templates {

extern const char* const kTextOnlyTrain;
extern const char* const kTextImageTrain;
extern const char* const kSectionTrain;
extern const char* const kCrossQuestionTrain;
extern const char* const kCrossAnswerTrain;

extern const char* const kTextOnlyTestQuestion;
extern const char* const kTextOnlyTestAnswer1;
extern const char* const kTextOnlyTestAnswer2;
extern const char* const kTextImageTestQuestion;
extern const char* const kTextImageTestAnswer1;
extern const char* const kTextImageTestAnswer2;
extern const char* const kSectionTestQuestion;
extern const char* const kSectionTestAnswer1;
extern const char* const kSectionTestAnswer2;

}  // namespace wukong::templates
